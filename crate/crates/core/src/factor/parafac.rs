//! Complex PARAFAC with a real-constrained spatial mode.

use super::als::{Als, Sweep};
use super::split::{split_slabs, Split};
use super::{
    best_of_starts, check_rank, complexify, explained_variance, normalize_spatial, random_complex, slab_norms,
    spatial_start, FactorModel, FitOptions, FitReport, ParafacModel, SpatialStart,
};
use crate::error::Result;
use crate::linalg::{solve_gram, solve_gram_real};
use crate::rng::{derive_seed, seeded};
use crate::tensor::{CMatrix, ComplexTensor, RMatrix, C64};

pub(crate) struct ParafacState<'a> {
    x: &'a ComplexTensor,
    slabs: Vec<Split>,
    model: ParafacModel,
    data_norm2: f64,
}

impl<'a> ParafacState<'a> {
    pub fn init(x: &'a ComplexTensor, rank: usize, seed: u64, kind: SpatialStart) -> Result<(Self, f64)> {
        check_rank(x.dims(), rank)?;
        let d = x.dims();
        let data_norm2 = x.norm_squared();
        let mut rng = seeded(derive_seed(seed, 0x1417));
        let spatial = spatial_start(x, rank, kind, seed);
        let norms = slab_norms(x);
        let mut spectral = random_complex(d.freqs, rank, &mut rng);
        let scale = 1.0 / (rank as f64).sqrt();
        for (f, mut row) in spectral.row_iter_mut().enumerate() {
            row *= C64::new(norms[f] * scale, 0.0);
        }
        let mut trial = random_complex(d.trials, rank, &mut rng);
        for mut c in trial.column_iter_mut() {
            c.normalize_mut();
        }
        let state = ParafacState { x, slabs: split_slabs(x), model: ParafacModel { spatial, spectral, trial }, data_norm2 };
        let loss = state.loss();
        Ok((state, loss))
    }

    /// Direct squared error `Σ_f ‖X(f) − A·D(f)·Yᵀ‖²`.
    pub fn loss(&self) -> f64 {
        let fm = FactorModel::Parafac(self.model.clone());
        (0..self.x.dims().freqs).map(|f| (self.x.slab(f) - fm.reconstruct_slab(f)).norm_squared()).sum()
    }
}

impl Sweep for ParafacState<'_> {
    fn sweep(&mut self) -> f64 {
        let x = self.x;
        let d = x.dims();
        let r = self.model.rank();
        let ParafacModel { spatial, spectral, trial } = &mut self.model;

        // Spatial mode, real-constrained: only Re(Σ_f X(f)·conj(Y)·D(f)*) is needed.
        let y = Split::from_complex(&*trial);
        let mut mttkrp = RMatrix::zeros(d.channels, r);
        for (f, slab) in self.slabs.iter().enumerate() {
            let xy = slab.mul_conj(&y);
            for c in 0..r {
                let p = spectral[(f, c)];
                let mut col = mttkrp.column_mut(c);
                col.axpy(p.re, &xy.re.column(c), 1.0);
                col.axpy(p.im, &xy.im.column(c), 1.0);
            }
        }
        let gram = (spectral.adjoint() * &*spectral).component_mul(&(trial.adjoint() * &*trial));
        let re_gram = gram.map(|z| z.re);
        *spatial = solve_gram_real(&re_gram, &mttkrp.transpose()).transpose();

        // A is fixed from here on, so AᵀX(f) serves both remaining modes.
        let a_c = complexify(spatial);
        let ata = a_c.adjoint() * &a_c;
        let projected: Vec<CMatrix> = self.slabs.iter().map(|s| s.real_tr_mul(spatial).to_complex()).collect();

        // Spectral mode.
        let gram_p = ata.component_mul(&(trial.adjoint() * &*trial));
        let rhs_p = CMatrix::from_fn(r, d.freqs, |c, f| {
            projected[f].row(c).iter().zip(trial.column(c).iter()).map(|(w, y)| w * y.conj()).sum()
        });
        *spectral = solve_gram(&gram_p, &rhs_p).expect("finite Gram system").transpose();

        // Trial mode.
        let gram_y = ata.component_mul(&(spectral.adjoint() * &*spectral));
        let mut rhs_y = CMatrix::zeros(r, d.trials);
        for (f, w) in projected.iter().enumerate() {
            for c in 0..r {
                let pc = spectral[(f, c)].conj();
                let mut row = rhs_y.row_mut(c);
                row += w.row(c) * pc;
            }
        }
        *trial = solve_gram(&gram_y, &rhs_y).expect("finite Gram system").transpose();

        // ‖X − M‖² = ‖X‖² − 2 Re⟨M, X⟩ + ‖M‖², all from R×R quantities.
        let inner: C64 = trial.iter().zip(rhs_y.transpose().iter()).map(|(y, b)| y.conj() * b).sum();
        let model_norm2: f64 = ata
            .component_mul(&(spectral.adjoint() * &*spectral))
            .component_mul(&(trial.adjoint() * &*trial))
            .iter()
            .map(|z| z.re)
            .sum();
        let loss = (self.data_norm2 - 2.0 * inner.re + model_norm2).max(0.0);

        normalize_spatial(spatial, spectral);
        for (mut y, mut p) in trial.column_iter_mut().zip(spectral.column_iter_mut()) {
            let n = y.norm();
            if n > 0.0 {
                y /= C64::new(n, 0.0);
                p *= C64::new(n, 0.0);
            }
        }
        loss
    }

    fn is_finite(&self) -> bool {
        let m = &self.model;
        m.spatial.iter().all(|v| v.is_finite())
            && m.spectral.iter().chain(m.trial.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub(crate) fn start(x: &ComplexTensor, rank: usize, seed: u64, kind: SpatialStart) -> Result<Als<ParafacState<'_>>> {
    let (mut state, loss) = ParafacState::init(x, rank, seed, kind)?;
    if state.data_norm2 == 0.0 {
        state.model.spectral.fill(C64::new(0.0, 0.0));
    }
    let data_norm2 = state.data_norm2;
    Ok(Als::new(state, loss, data_norm2))
}

pub(crate) fn finish(x: &ComplexTensor, als: &Als<ParafacState<'_>>) -> Result<(ParafacModel, FitReport)> {
    let model = als.state.model.clone();
    let ev = explained_variance(x, &FactorModel::Parafac(model.clone()))?;
    Ok((model, als.report(ev)))
}

/// Fits a rank-`rank` complex PARAFAC model, cycling the spatial (real),
/// spectral and trial modes. After every sweep the spatial and trial columns
/// are scaled to unit norm with the scale absorbed into the spectral factor.
pub fn fit_parafac(x: &ComplexTensor, rank: usize, opts: &FitOptions) -> Result<(ParafacModel, FitReport)> {
    best_of_starts(opts, |seed, kind| {
        let mut als = start(x, rank, seed, kind)?;
        als.advance(opts.max_iters, opts.tol)?;
        finish(x, &als)
    })
}
