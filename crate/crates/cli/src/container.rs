//! Binary container for recordings, tensors and fitted models.
//!
//! ```text
//! offset 0   8 bytes   magic "PHASEFAC"
//! offset 8   u32 LE    header length n
//! offset 12  n bytes   UTF-8 JSON header
//! offset 12+n          array payloads, back to back, in header order
//! ```
//!
//! The header names the container `kind`, the hash of the config that
//! produced it, free-form `meta` values and, for every array, its `name`,
//! `dtype` (`f64` or `c128`), `shape` and `layout`. Payloads are little
//! endian; complex values are interleaved `(re, im)` pairs.
//!
//! Layouts: `colmajor` puts the first index fastest. `freq-major-slab-colmajor`
//! is used for `[rows, freqs, cols]` arrays stored as one column-major
//! `rows × cols` slab per frequency, so element `(r, f, c)` sits at
//! `f·rows·cols + c·rows + r`.

use std::path::Path;

use phasefac::C64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"PHASEFAC";
pub const FORMAT_NAME: &str = "phasefac";
pub const FORMAT_VERSION: u32 = 1;
pub const LAYOUT_COLMAJOR: &str = "colmajor";
pub const LAYOUT_SLABS: &str = "freq-major-slab-colmajor";

const PREFIX_LEN: usize = MAGIC.len() + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    C128(Vec<C64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::C128(_) => Dtype::C128,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::C128(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub name: String,
    pub shape: Vec<usize>,
    pub layout: String,
    pub data: ArrayData,
}

impl Array {
    pub fn f64(name: &str, shape: Vec<usize>, layout: &str, data: Vec<f64>) -> Self {
        Array { name: name.into(), shape, layout: layout.into(), data: ArrayData::F64(data) }
    }

    pub fn c128(name: &str, shape: Vec<usize>, layout: &str, data: Vec<C64>) -> Self {
        Array { name: name.into(), shape, layout: layout.into(), data: ArrayData::C128(data) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub config_hash: String,
    pub meta: Map<String, Value>,
    pub arrays: Vec<Array>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    config_hash: String,
    meta: Map<String, Value>,
    arrays: Vec<ArrayHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayHeader {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
    layout: String,
}

/// A parse failure at a byte offset within the file.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatError {
    pub offset: u64,
    pub message: String,
}

impl FormatError {
    fn at(offset: usize, message: impl Into<String>) -> Self {
        FormatError { offset: offset as u64, message: message.into() }
    }

    pub fn with_path(self, path: &Path) -> CliError {
        CliError::Format { path: path.to_path_buf(), offset: self.offset, message: self.message }
    }
}

impl Container {
    pub fn new(kind: &str, config_hash: &str) -> Self {
        Container { kind: kind.into(), config_hash: config_hash.into(), meta: Map::new(), arrays: vec![] }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn with_array(mut self, array: Array) -> Self {
        self.arrays.push(array);
        self
    }

    pub fn array(&self, name: &str) -> Option<&Array> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            config_hash: self.config_hash.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayHeader {
                    name: a.name.clone(),
                    dtype: a.data.dtype(),
                    shape: a.shape.clone(),
                    layout: a.layout.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.arrays.iter().map(|a| a.data.len() * a.data.dtype().width()).sum();
        let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for a in &self.arrays {
            match &a.data {
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::C128(v) => v.iter().for_each(|z| {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(FormatError::at(0, "missing PHASEFAC magic"));
        }
        if bytes.len() < PREFIX_LEN {
            return Err(FormatError::at(MAGIC.len(), "truncated header length"));
        }
        let n = u32::from_le_bytes(bytes[MAGIC.len()..PREFIX_LEN].try_into().expect("4 bytes")) as usize;
        let body = PREFIX_LEN
            .checked_add(n)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| FormatError::at(MAGIC.len(), format!("header length {n} exceeds file size")))?;
        let json = &bytes[PREFIX_LEN..body];
        let header: Header = serde_json::from_slice(json)
            .map_err(|e| FormatError::at(PREFIX_LEN + json_offset(json, e.line(), e.column()), e.to_string()))?;
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(FormatError::at(
                PREFIX_LEN,
                format!("unsupported format {} version {}", header.format, header.version),
            ));
        }
        let mut pos = body;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for h in header.arrays {
            let count = h
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| FormatError::at(pos, format!("array '{}' shape overflows", h.name)))?;
            let len = count
                .checked_mul(h.dtype.width())
                .filter(|&len| len <= bytes.len() - pos)
                .ok_or_else(|| {
                    FormatError::at(
                        bytes.len(),
                        format!("array '{}' needs {count} elements of {:?} but the file ends", h.name, h.dtype),
                    )
                })?;
            let raw = &bytes[pos..pos + len];
            let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
            let data = match h.dtype {
                Dtype::F64 => ArrayData::F64(raw.chunks_exact(8).map(f).collect()),
                Dtype::C128 => ArrayData::C128(raw.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect()),
            };
            arrays.push(Array { name: h.name, shape: h.shape, layout: h.layout, data });
            pos += len;
        }
        if pos != bytes.len() {
            return Err(FormatError::at(pos, format!("{} trailing bytes after the last array", bytes.len() - pos)));
        }
        Ok(Container { kind: header.kind, config_hash: header.config_hash, meta: header.meta, arrays })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.with_path(path))
    }

    /// Reads a container and checks its kind.
    pub fn read_kind(path: &Path, kind: &str) -> CliResult<Self> {
        let c = Self::read(path)?;
        if c.kind != kind {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                offset: PREFIX_LEN as u64,
                message: format!("expected a {kind} container, found {}", c.kind),
            });
        }
        Ok(c)
    }
}

/// Byte offset of a 1-based (line, column) position in `text`.
fn json_offset(text: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}
