//! Conversions between pipeline objects and their on-disk forms.

use std::path::Path;

use phasefac::factor::{FactorModel, Parafac2Model, ParafacModel};
use phasefac::synth::{build_head_model, render_scene, HeadModel, Octant, SourceScene};
use phasefac::rng::seeded;
use phasefac::{CMatrix, ComplexTensor, Dims, RMatrix};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::HeadConfig;
use crate::container::{Array, ArrayData, Container, LAYOUT_COLMAJOR, LAYOUT_SLABS};
use crate::error::{CliError, CliResult};

pub const KIND_RECORDING: &str = "recording";
pub const KIND_TENSOR: &str = "tensor";
pub const KIND_MODEL: &str = "model";

fn malformed(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Format { path: path.to_path_buf(), offset: 0, message: message.into() }
}

fn f64_array<'a>(c: &'a Container, path: &Path, name: &str, rank: usize) -> CliResult<(&'a [usize], &'a [f64])> {
    match c.array(name) {
        Some(Array { shape, data: ArrayData::F64(v), .. }) if shape.len() == rank => Ok((shape, v)),
        _ => Err(malformed(path, format!("missing {rank}-d f64 array '{name}'"))),
    }
}

fn c128_array<'a>(
    c: &'a Container,
    path: &Path,
    name: &str,
    rank: usize,
) -> CliResult<(&'a [usize], &'a [phasefac::C64])> {
    match c.array(name) {
        Some(Array { shape, data: ArrayData::C128(v), .. }) if shape.len() == rank => Ok((shape, v)),
        _ => Err(malformed(path, format!("missing {rank}-d c128 array '{name}'"))),
    }
}

fn meta_f64(c: &Container, path: &Path, key: &str) -> CliResult<f64> {
    c.meta.get(key).and_then(Value::as_f64).ok_or_else(|| malformed(path, format!("missing numeric meta '{key}'")))
}

/// A sensor recording with its sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub data: RMatrix,
    pub fs: f64,
}

impl Recording {
    pub fn to_container(&self, config_hash: &str) -> Container {
        Container::new(KIND_RECORDING, config_hash).with_meta("fs", self.fs).with_array(Array::f64(
            "data",
            vec![self.data.nrows(), self.data.ncols()],
            LAYOUT_COLMAJOR,
            self.data.as_slice().to_vec(),
        ))
    }

    pub fn from_container(c: &Container, path: &Path) -> CliResult<Self> {
        let fs = meta_f64(c, path, "fs")?;
        let (shape, v) = f64_array(c, path, "data", 2)?;
        Ok(Recording { data: RMatrix::from_column_slice(shape[0], shape[1], v), fs })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::from_container(&Container::read_kind(path, KIND_RECORDING)?, path)
    }
}

/// A complex tensor with its frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub tensor: ComplexTensor,
    pub frequencies_hz: Vec<f64>,
    pub fs: f64,
}

impl TensorFile {
    pub fn to_container(&self, config_hash: &str) -> Container {
        let d = self.tensor.dims();
        Container::new(KIND_TENSOR, config_hash)
            .with_meta("fs", self.fs)
            .with_array(Array::f64("frequencies_hz", vec![d.freqs], LAYOUT_COLMAJOR, self.frequencies_hz.clone()))
            .with_array(Array::c128(
                "data",
                vec![d.channels, d.freqs, d.trials],
                LAYOUT_SLABS,
                self.tensor.data().to_vec(),
            ))
    }

    pub fn from_container(c: &Container, path: &Path) -> CliResult<Self> {
        let fs = meta_f64(c, path, "fs")?;
        let (_, freqs) = f64_array(c, path, "frequencies_hz", 1)?;
        let (shape, v) = c128_array(c, path, "data", 3)?;
        let tensor = ComplexTensor::new(Dims::new(shape[0], shape[1], shape[2]), v.to_vec())?;
        if freqs.len() != shape[1] {
            return Err(malformed(path, "frequency axis length does not match the tensor"));
        }
        Ok(TensorFile { tensor, frequencies_hz: freqs.to_vec(), fs })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::from_container(&Container::read_kind(path, KIND_TENSOR)?, path)
    }
}

/// A fitted model with the frequency axis it was fitted on and a JSON
/// summary of the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: FactorModel,
    pub frequencies_hz: Vec<f64>,
    pub summary: Value,
}

fn cmatrix_array(name: &str, m: &CMatrix) -> Array {
    Array::c128(name, vec![m.nrows(), m.ncols()], LAYOUT_COLMAJOR, m.as_slice().to_vec())
}

fn read_cmatrix(c: &Container, path: &Path, name: &str) -> CliResult<CMatrix> {
    let (shape, v) = c128_array(c, path, name, 2)?;
    Ok(CMatrix::from_column_slice(shape[0], shape[1], v))
}

impl ModelFile {
    pub fn to_container(&self, config_hash: &str) -> Container {
        let a = self.model.spatial();
        let mut c = Container::new(KIND_MODEL, config_hash)
            .with_meta("algo", self.model.algorithm().to_string())
            .with_meta("summary", self.summary.clone())
            .with_array(Array::f64(
                "frequencies_hz",
                vec![self.frequencies_hz.len()],
                LAYOUT_COLMAJOR,
                self.frequencies_hz.clone(),
            ))
            .with_array(Array::f64("spatial", vec![a.nrows(), a.ncols()], LAYOUT_COLMAJOR, a.as_slice().to_vec()))
            .with_array(cmatrix_array("spectral", self.model.spectral()));
        match &self.model {
            FactorModel::Parafac(m) => c = c.with_array(cmatrix_array("trial", &m.trial)),
            FactorModel::Parafac2(m) => {
                let (k, r) = m.q.first().map_or((0, m.h.nrows()), |q| (q.nrows(), q.ncols()));
                let q: Vec<_> = m.q.iter().flat_map(|q| q.as_slice().iter().copied()).collect();
                c = c
                    .with_array(cmatrix_array("h", &m.h))
                    .with_array(Array::c128("q", vec![k, m.q.len(), r], LAYOUT_SLABS, q));
            }
        }
        c
    }

    pub fn from_container(c: &Container, path: &Path) -> CliResult<Self> {
        let (_, freqs) = f64_array(c, path, "frequencies_hz", 1)?;
        let (shape, v) = f64_array(c, path, "spatial", 2)?;
        let spatial = RMatrix::from_column_slice(shape[0], shape[1], v);
        let spectral = read_cmatrix(c, path, "spectral")?;
        let algo = c.meta.get("algo").and_then(Value::as_str).ok_or_else(|| malformed(path, "missing meta 'algo'"))?;
        let model: FactorModel = match algo {
            "parafac" => ParafacModel { spatial, spectral, trial: read_cmatrix(c, path, "trial")? }.into(),
            "parafac2" => {
                let h = read_cmatrix(c, path, "h")?;
                let (shape, v) = c128_array(c, path, "q", 3)?;
                let (k, f, r) = (shape[0], shape[1], shape[2]);
                let q = (0..f).map(|i| CMatrix::from_column_slice(k, r, &v[i * k * r..(i + 1) * k * r])).collect();
                Parafac2Model { spatial, spectral, h, q }.into()
            }
            other => return Err(malformed(path, format!("unknown algorithm '{other}'"))),
        };
        let r = model.rank();
        let consistent = model.spatial().ncols() == r
            && model.spectral().ncols() == r
            && model.spectral().nrows() == freqs.len()
            && match &model {
                FactorModel::Parafac(m) => m.trial.ncols() == r,
                FactorModel::Parafac2(m) => {
                    m.h.shape() == (r, r) && m.q.iter().all(|q| q.ncols() == r && q.nrows() == m.q[0].nrows())
                }
            };
        if !consistent {
            return Err(malformed(path, "factor shapes are inconsistent"));
        }
        let summary = c.meta.get("summary").cloned().unwrap_or(Value::Null);
        Ok(ModelFile { model, frequencies_hz: freqs.to_vec(), summary })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::from_container(&Container::read_kind(path, KIND_MODEL)?, path)
    }
}

/// Everything needed to re-render a generated recording, plus the ground
/// truth of where the coupled sources sit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub config_hash: String,
    pub head: HeadConfig,
    pub duration_s: f64,
    pub fs: f64,
    pub truth: Option<Truth>,
    pub scene: SourceScene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub leadfields: [usize; 2],
    pub octants: [Octant; 2],
    pub positions: [[f64; 3]; 2],
}

impl SceneRecord {
    pub fn new(config_hash: &str, head_cfg: &HeadConfig, head: &HeadModel, scene: SourceScene, duration_s: f64, fs: f64) -> Self {
        let truth = scene.coupled.as_ref().map(|c| {
            let [i, j] = c.leadfields;
            Truth {
                leadfields: c.leadfields,
                octants: [head.sources[i].octant, head.sources[j].octant],
                positions: [head.sources[i].position, head.sources[j].position],
            }
        });
        SceneRecord { config_hash: config_hash.into(), head: head_cfg.clone(), duration_s, fs, truth, scene }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene record serializes to TOML")
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("scene record: {e}")))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Rebuilds the head model and renders the recording again.
    pub fn render(&self) -> CliResult<Recording> {
        let head = head_model(&self.head)?;
        let rendered = render_scene(&self.scene, &head, self.duration_s, self.fs)?;
        Ok(Recording { data: rendered.data, fs: self.fs })
    }
}

pub fn head_model(cfg: &HeadConfig) -> CliResult<HeadModel> {
    Ok(build_head_model(cfg.channels, cfg.n_leadfields, &mut seeded(cfg.seed))?)
}
