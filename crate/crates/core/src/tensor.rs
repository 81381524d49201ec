//! Dense complex 3-way tensor of channels × frequencies × trials.
//!
//! Storage is frequency-major: the tensor is a sequence of `F` slabs, each an
//! `m × K` matrix stored column-major (nalgebra's native order). Element
//! `(c, f, k)` therefore lives at `f·m·K + k·m + c`. The on-disk container
//! written by the CLI uses the same order, so a slab is a contiguous,
//! zero-copy [`DMatrixView`].

use nalgebra::{Complex, DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;

/// Layout tag recorded in file headers.
pub const LAYOUT_TAG: &str = "freq-major-slab-colmajor";

/// Shape of a [`ComplexTensor`]: channels, frequency bins, trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub channels: usize,
    pub freqs: usize,
    pub trials: usize,
}

impl Dims {
    pub fn new(channels: usize, freqs: usize, trials: usize) -> Self {
        Dims { channels, freqs, trials }
    }

    pub fn len(&self) -> usize {
        self.channels * self.freqs * self.trials
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn as_array(&self) -> [usize; 3] {
        [self.channels, self.freqs, self.trials]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    dims: Dims,
    data: Vec<C64>,
}

/// Tensor mode. `Channel` is mode 1, `Frequency` mode 2, `Trial` mode 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Channel,
    Frequency,
    Trial,
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::Channel),
            2 => Ok(Mode::Frequency),
            3 => Ok(Mode::Trial),
            other => Err(Error::invalid(format!("mode must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl ComplexTensor {
    pub fn new(dims: Dims, data: Vec<C64>) -> Result<Self> {
        if dims.channels == 0 || dims.freqs == 0 || dims.trials == 0 {
            return Err(Error::invalid(format!("tensor dims must be positive, got {dims:?}")));
        }
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(ComplexTensor { dims, data })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::new(dims, vec![C64::new(0.0, 0.0); dims.len()])
    }

    /// Builds a tensor from `F` slabs of identical `m × K` shape.
    pub fn from_slabs(slabs: &[CMatrix]) -> Result<Self> {
        let first = slabs
            .first()
            .ok_or_else(|| Error::invalid("at least one frequency slab is required"))?;
        let (m, k) = first.shape();
        let mut data = Vec::with_capacity(m * k * slabs.len());
        for (f, s) in slabs.iter().enumerate() {
            if s.shape() != (m, k) {
                return Err(Error::invalid(format!(
                    "slab {f} has shape {:?}, expected {:?}",
                    s.shape(),
                    (m, k)
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::new(Dims::new(m, slabs.len(), k), data)
    }

    /// Builds a tensor by evaluating `entry(c, f, k)` at every index.
    pub fn from_fn(dims: Dims, mut entry: impl FnMut(usize, usize, usize) -> C64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for f in 0..dims.freqs {
            for k in 0..dims.trials {
                for c in 0..dims.channels {
                    data.push(entry(c, f, k));
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    fn offset(&self, c: usize, f: usize, k: usize) -> usize {
        let Dims { channels: m, trials: kk, .. } = self.dims;
        f * m * kk + k * m + c
    }

    pub fn get(&self, c: usize, f: usize, k: usize) -> C64 {
        self.data[self.offset(c, f, k)]
    }

    /// The `m × K` slab at frequency bin `f`.
    pub fn slab(&self, f: usize) -> DMatrixView<'_, C64> {
        let Dims { channels: m, freqs, trials: k } = self.dims;
        assert!(f < freqs, "slab index {f} out of range (F = {freqs})");
        let len = m * k;
        DMatrixView::from_slice(&self.data[f * len..(f + 1) * len], m, k)
    }

    pub fn slabs(&self) -> impl Iterator<Item = DMatrixView<'_, C64>> + '_ {
        (0..self.dims.freqs).map(move |f| self.slab(f))
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        ComplexTensor { dims: self.dims, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// Mode-n unfolding in the Kolda–Bader convention: the remaining indices
    /// are enumerated with the lower mode varying fastest.
    ///
    /// * mode 1 (channel): `m × (F·K)`, column `f + F·k`
    /// * mode 2 (frequency): `F × (m·K)`, column `c + m·k`
    /// * mode 3 (trial): `K × (m·F)`, column `c + m·f`
    pub fn unfold(&self, mode: Mode) -> CMatrix {
        let [m, ff, kk] = self.dims.as_array();
        match mode {
            Mode::Channel => CMatrix::from_fn(m, ff * kk, |c, j| self.get(c, j % ff, j / ff)),
            Mode::Frequency => CMatrix::from_fn(ff, m * kk, |f, j| self.get(j % m, f, j / m)),
            Mode::Trial => CMatrix::from_fn(kk, m * ff, |k, j| self.get(j % m, j / m, k)),
        }
    }

    /// Inverse of [`ComplexTensor::unfold`].
    pub fn refold(mat: &CMatrix, mode: Mode, dims: Dims) -> Result<Self> {
        let [m, ff, kk] = dims.as_array();
        let expected = match mode {
            Mode::Channel => (m, ff * kk),
            Mode::Frequency => (ff, m * kk),
            Mode::Trial => (kk, m * ff),
        };
        if mat.shape() != expected {
            return Err(Error::invalid(format!(
                "unfolded matrix has shape {:?}, expected {:?} for {mode:?} of {dims:?}",
                mat.shape(),
                expected
            )));
        }
        Self::from_fn(dims, |c, f, k| match mode {
            Mode::Channel => mat[(c, f + ff * k)],
            Mode::Frequency => mat[(f, c + m * k)],
            Mode::Trial => mat[(k, c + m * f)],
        })
    }
}
