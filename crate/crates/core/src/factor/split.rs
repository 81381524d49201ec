//! Complex matrices held as separate real and imaginary parts so that the
//! heavy products run on the real `f64` kernels.

use crate::tensor::{CMatrix, ComplexTensor, RMatrix, C64};

#[derive(Debug, Clone)]
pub(crate) struct Split {
    pub re: RMatrix,
    pub im: RMatrix,
}

impl Split {
    pub fn from_complex<'a>(m: impl Into<nalgebra::DMatrixView<'a, C64>>) -> Self {
        let m = m.into();
        Split { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }

    pub fn to_complex(&self) -> CMatrix {
        self.re.zip_map(&self.im, C64::new)
    }

    pub fn norm_squared(&self) -> f64 {
        self.re.norm_squared() + self.im.norm_squared()
    }

    /// `Re(self · bᴴ)`.
    pub fn re_mul_adjoint(&self, b: &Split) -> RMatrix {
        &self.re * b.re.transpose() + &self.im * b.im.transpose()
    }

    /// `a · self` for a real `a`.
    pub fn real_mul(&self, a: &RMatrix) -> Split {
        Split { re: a * &self.re, im: a * &self.im }
    }

    /// `‖self − other‖²`.
    pub fn distance_squared(&self, other: &Split) -> f64 {
        (&self.re - &other.re).norm_squared() + (&self.im - &other.im).norm_squared()
    }

    /// `self · b`.
    pub fn mul(&self, b: &Split) -> Split {
        Split { re: &self.re * &b.re - &self.im * &b.im, im: &self.re * &b.im + &self.im * &b.re }
    }

    /// `self · conj(b)`.
    pub fn mul_conj(&self, b: &Split) -> Split {
        Split { re: &self.re * &b.re + &self.im * &b.im, im: &self.im * &b.re - &self.re * &b.im }
    }

    /// `aᵀ · self` for a real `a`.
    pub fn real_tr_mul(&self, a: &RMatrix) -> Split {
        Split { re: a.tr_mul(&self.re), im: a.tr_mul(&self.im) }
    }
}

pub(crate) fn split_slabs(x: &ComplexTensor) -> Vec<Split> {
    x.slabs().map(Split::from_complex).collect()
}
