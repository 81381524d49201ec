//! Complex PARAFAC2 by direct fitting.
//!
//! Each sweep first solves the orthogonal Procrustes problem for every
//! `Q(f)` with `A`, `P` and `H` fixed, then projects the data onto the
//! resulting bases, `Z(f) = X(f)·Q(f)` (m × R), and finishes with one PARAFAC
//! ALS cycle on the stack of projected slabs `Z(f) ≈ A·D(f)·H`. Because
//! `Q(f)` has orthonormal columns,
//!
//! `‖X(f) − A·D(f)·H·Q(f)ᴴ‖² = ‖X(f)‖² − ‖Z(f)‖² + ‖Z(f) − A·D(f)·H‖²`,
//!
//! so the projected problem has the same minimizers as the full one.

use super::als::{Als, Sweep};
use super::split::{split_slabs, Split};
use super::{
    best_of_starts, check_rank, complexify, explained_variance, normalize_spatial, random_complex, slab_norms,
    spatial_start, FactorModel, FitOptions, FitReport, Parafac2Model, SpatialStart,
};
use crate::error::{Error, Result};
use crate::linalg::{procrustes, solve_gram, solve_gram_real};
use crate::rng::{derive_seed, seeded};
use crate::tensor::{CMatrix, ComplexTensor, RMatrix, C64};

/// `D(f)·H`: row `c` of `H` scaled by `P[f, c]`.
fn scaled_rows(spectral: &CMatrix, h: &CMatrix, f: usize) -> CMatrix {
    CMatrix::from_fn(h.nrows(), h.ncols(), |c, r| spectral[(f, c)] * h[(c, r)])
}

/// `A·D(f)·H` as a complex `m × R` matrix.
fn loading(a_c: &CMatrix, spectral: &CMatrix, h: &CMatrix, f: usize) -> CMatrix {
    a_c * scaled_rows(spectral, h, f)
}

/// Replaces every `Q(f)` by the Procrustes solution
/// `U·Vᴴ` of `X(f)ᴴ·A·D(f)·H = U·Σ·Vᴴ`, the loss-minimizing orthonormal basis
/// for fixed `A`, `P` and `H`.
pub fn procrustes_update(x: &ComplexTensor, model: &mut Parafac2Model) -> Result<()> {
    if x.dims() != model.dims() {
        return Err(Error::invalid("model and tensor dims differ"));
    }
    let a_c = complexify(&model.spatial);
    for (f, slab) in x.slabs().enumerate() {
        let target = slab.ad_mul(&loading(&a_c, &model.spectral, &model.h, f));
        model.q[f] = procrustes(&target)?;
    }
    Ok(())
}

pub(crate) struct Parafac2State<'a> {
    x: &'a ComplexTensor,
    slabs: Vec<Split>,
    model: Parafac2Model,
    data_norm2: f64,
    slab_norm2: Vec<f64>,
}

impl<'a> Parafac2State<'a> {
    pub fn init(x: &'a ComplexTensor, rank: usize, seed: u64, kind: SpatialStart) -> Result<(Self, f64)> {
        let d = x.dims();
        check_rank(d, rank)?;
        let mut rng = seeded(derive_seed(seed, 0x2417));
        let spatial = spatial_start(x, rank, kind, seed);
        let norms = slab_norms(x);
        let mut spectral = random_complex(d.freqs, rank, &mut rng);
        let scale = 1.0 / (rank as f64).sqrt();
        for (f, mut row) in spectral.row_iter_mut().enumerate() {
            row *= C64::new(norms[f] * scale, 0.0);
        }
        let h = random_complex(rank, rank, &mut rng);
        let q = vec![CMatrix::identity(d.trials, rank); d.freqs];
        let mut model = Parafac2Model { spatial, spectral, h, q };
        if x.norm_squared() == 0.0 {
            model.spectral.fill(C64::new(0.0, 0.0));
        } else {
            procrustes_update(x, &mut model)?;
        }
        let state = Parafac2State {
            x,
            slabs: split_slabs(x),
            data_norm2: x.norm_squared(),
            slab_norm2: norms.iter().map(|n| n * n).collect(),
            model,
        };
        let loss = squared_error_parafac2(x, &state.model);
        Ok((state, loss))
    }
}

pub(crate) fn squared_error_parafac2(x: &ComplexTensor, model: &Parafac2Model) -> f64 {
    let a_c = complexify(&model.spatial);
    x.slabs()
        .enumerate()
        .map(|(f, slab)| {
            let fitted = loading(&a_c, &model.spectral, &model.h, f) * model.q[f].adjoint();
            (slab - fitted).norm_squared()
        })
        .sum()
}

impl Sweep for Parafac2State<'_> {
    fn sweep(&mut self) -> f64 {
        let x = self.x;
        let d = x.dims();
        let r = self.model.rank();

        // Procrustes step and projection; X(f)ᴴ·A·D(f)·H = (AᵀX(f))ᴴ·D(f)·H.
        let mut projected = Vec::with_capacity(d.freqs);
        for (f, slab) in self.slabs.iter().enumerate() {
            let w = slab.real_tr_mul(&self.model.spatial).to_complex();
            let dh = scaled_rows(&self.model.spectral, &self.model.h, f);
            let q = procrustes(&w.ad_mul(&dh)).unwrap_or_else(|_| self.model.q[f].clone());
            projected.push(slab.mul(&Split::from_complex(&q)));
            self.model.q[f] = q;
        }
        let Parafac2Model { spatial, spectral, h, .. } = &mut self.model;

        // Spatial mode (real): A·Re(Σ_f D H Hᴴ D*) = Re(Σ_f Z(f) Hᴴ D(f)*).
        let hh = &*h * h.adjoint();
        let mut rhs_a = RMatrix::zeros(d.channels, r);
        for (f, z) in projected.iter().enumerate() {
            rhs_a += z.re_mul_adjoint(&Split::from_complex(&scaled_rows(spectral, h, f)));
        }
        let ptp = spectral.transpose() * spectral.conjugate();
        let gram_a = hh.component_mul(&ptp).map(|z| z.re);
        *spatial = solve_gram_real(&gram_a, &rhs_a.transpose()).transpose();

        let ata = complexify(&spatial.tr_mul(spatial));
        let az: Vec<CMatrix> = projected.iter().map(|z| z.real_tr_mul(spatial).to_complex()).collect();

        // Cross-product factor H.
        let gram_h = ata.component_mul(&(spectral.adjoint() * &*spectral));
        let mut rhs_h = CMatrix::zeros(r, r);
        for (f, w) in az.iter().enumerate() {
            for c in 0..r {
                let pc = spectral[(f, c)].conj();
                let mut row = rhs_h.row_mut(c);
                row += w.row(c) * pc;
            }
        }
        *h = solve_gram(&gram_h, &rhs_h).expect("finite Gram system");

        // Spectral mode.
        let hh = &*h * h.adjoint();
        let gram_p = ata.component_mul(&hh.map(|z| z.conj()));
        let rhs_p = CMatrix::from_fn(r, d.freqs, |c, f| {
            az[f].row(c).iter().zip(h.row(c).iter()).map(|(w, hv)| w * hv.conj()).sum()
        });
        *spectral = solve_gram(&gram_p, &rhs_p).expect("finite Gram system").transpose();

        let mut loss = 0.0;
        for (f, z) in projected.iter().enumerate() {
            let outside = (self.slab_norm2[f] - z.norm_squared()).max(0.0);
            let fitted = Split::from_complex(&scaled_rows(spectral, h, f)).real_mul(spatial);
            loss += outside + z.distance_squared(&fitted);
        }

        normalize_spatial(spatial, spectral);
        for (c, mut p) in spectral.column_iter_mut().enumerate() {
            let n = h.row(c).norm();
            if n > 0.0 {
                let mut row = h.row_mut(c);
                row /= C64::new(n, 0.0);
                p *= C64::new(n, 0.0);
            }
        }
        loss
    }

    fn is_finite(&self) -> bool {
        let m = &self.model;
        let fin = |z: &C64| z.re.is_finite() && z.im.is_finite();
        m.spatial.iter().all(|v| v.is_finite())
            && m.spectral.iter().all(fin)
            && m.h.iter().all(fin)
            && m.q.iter().all(|q| q.iter().all(fin))
    }
}

pub(crate) fn start(x: &ComplexTensor, rank: usize, seed: u64, kind: SpatialStart) -> Result<Als<Parafac2State<'_>>> {
    let (state, loss) = Parafac2State::init(x, rank, seed, kind)?;
    let data_norm2 = state.data_norm2;
    Ok(Als::new(state, loss, data_norm2))
}

/// Continues PARAFAC2 ALS from a given model instead of a random start.
pub fn fit_parafac2_from(
    x: &ComplexTensor,
    init: Parafac2Model,
    opts: &FitOptions,
) -> Result<(Parafac2Model, FitReport)> {
    if init.dims() != x.dims() {
        return Err(Error::invalid("initial model dims do not match the tensor"));
    }
    check_rank(x.dims(), init.rank())?;
    let norms = slab_norms(x);
    let state = Parafac2State {
        x,
        slabs: split_slabs(x),
        data_norm2: x.norm_squared(),
        slab_norm2: norms.iter().map(|n| n * n).collect(),
        model: init,
    };
    let loss = squared_error_parafac2(x, &state.model);
    let data_norm2 = state.data_norm2;
    let mut als = Als::new(state, loss, data_norm2);
    als.advance(opts.max_iters, opts.tol)?;
    finish(x, &als)
}

pub(crate) fn finish(x: &ComplexTensor, als: &Als<Parafac2State<'_>>) -> Result<(Parafac2Model, FitReport)> {
    let model = als.state.model.clone();
    let ev = explained_variance(x, &FactorModel::Parafac2(model.clone()))?;
    Ok((model, als.report(ev)))
}

/// Fits a rank-`rank` complex PARAFAC2 model by direct fitting. Requires
/// `rank ≤ min(m, F, K)`.
pub fn fit_parafac2(x: &ComplexTensor, rank: usize, opts: &FitOptions) -> Result<(Parafac2Model, FitReport)> {
    best_of_starts(opts, |seed, kind| {
        let mut als = start(x, rank, seed, kind)?;
        als.advance(opts.max_iters, opts.tol)?;
        finish(x, &als)
    })
}
