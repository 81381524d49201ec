//! Complex PARAFAC and PARAFAC2 by alternating least squares.
//!
//! Both models share a real spatial factor `A` (m × R, unit-norm columns) and
//! a complex spectral factor `P` (F × R). They differ in the trial mode:
//!
//! * PARAFAC: `X(f) ≈ A · diag(P[f,:]) · Yᵀ` with one complex `K × R` trial
//!   factor shared by every frequency.
//! * PARAFAC2: `X(f) ≈ A · diag(P[f,:]) · H · Q(f)ᴴ` where every `Q(f)` has
//!   orthonormal columns. The per-frequency trial profiles
//!   `Y(f) = H·Q(f)ᴴ` (R × K) then have constant cross-products
//!   `Y(f)·Y(f)ᴴ = H·Hᴴ`.

mod als;
mod multi;
mod parafac;
mod parafac2;
mod split;

use std::time::Duration;

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};
use crate::tensor::{CMatrix, ComplexTensor, Dims, RMatrix, C64};

pub use multi::{multi_init_fit, MultiInitOptions, MultiInitResult};
pub use parafac::fit_parafac;
pub use parafac2::{fit_parafac2, fit_parafac2_from, procrustes_update};

/// Largest rank fitted without a warning; beyond it PARAFAC2 uniqueness is
/// empirically unreliable.
pub const RECOMMENDED_MAX_RANK: usize = 8;

/// Iterations each candidate initialization is run before the best is refined.
pub const BURN_IN_ITERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Parafac,
    Parafac2,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Parafac => "parafac",
            Algorithm::Parafac2 => "parafac2",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parafac" => Ok(Algorithm::Parafac),
            "parafac2" => Ok(Algorithm::Parafac2),
            other => Err(Error::invalid(format!("unknown algorithm '{other}' (parafac | parafac2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Independent starts per fit; the lowest final loss is kept. Start 0 is
    /// the SVD warm start, later starts draw the spatial factor at random.
    /// `multi_init_fit` schedules its own starts and ignores this.
    pub starts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iters: 500, tol: 1e-8, seed: 0, starts: 1 }
    }
}

impl FitOptions {
    /// Seed of start `i`; start 0 uses `seed` itself.
    pub(crate) fn start_seed(&self, i: usize) -> u64 {
        if i == 0 {
            self.seed
        } else {
            derive_seed(self.seed, i as u64)
        }
    }
}

/// Runs `opts.starts` fits and keeps the one with the lowest final loss
/// (earliest start on ties).
pub(crate) fn best_of_starts<M>(
    opts: &FitOptions,
    mut fit: impl FnMut(u64, SpatialStart) -> Result<(M, FitReport)>,
) -> Result<(M, FitReport)> {
    if opts.starts == 0 {
        return Err(Error::invalid("at least one start is required"));
    }
    let mut best: Option<(M, FitReport)> = None;
    for i in 0..opts.starts {
        let kind = if i == 0 { SpatialStart::Svd } else { SpatialStart::Random };
        let candidate = fit(opts.start_seed(i), kind)?;
        let loss = |r: &FitReport| r.losses.last().copied().unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(_, b)| loss(&candidate.1) < loss(b)) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one start ran"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Squared error after initialization (entry 0) and after every sweep.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub explained_variance: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParafacModel {
    /// Real `m × R` spatial factor.
    pub spatial: RMatrix,
    /// Complex `F × R` spectral factor.
    pub spectral: CMatrix,
    /// Complex `K × R` trial factor.
    pub trial: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parafac2Model {
    pub spatial: RMatrix,
    pub spectral: CMatrix,
    /// `R × R` cross-product factor.
    pub h: CMatrix,
    /// One `K × R` column-orthonormal matrix per frequency.
    pub q: Vec<CMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorModel {
    Parafac(ParafacModel),
    Parafac2(Parafac2Model),
}

impl From<ParafacModel> for FactorModel {
    fn from(m: ParafacModel) -> Self {
        FactorModel::Parafac(m)
    }
}

impl From<Parafac2Model> for FactorModel {
    fn from(m: Parafac2Model) -> Self {
        FactorModel::Parafac2(m)
    }
}

pub(crate) fn random_complex(rows: usize, cols: usize, rng: &mut Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
            * std::f64::consts::FRAC_1_SQRT_2
    })
}

fn random_unit_columns(rows: usize, cols: usize, rng: &mut Rng) -> RMatrix {
    let mut a = RMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    for mut c in a.column_iter_mut() {
        c.normalize_mut();
    }
    a
}

fn random_orthonormal(rows: usize, cols: usize, rng: &mut Rng) -> CMatrix {
    random_complex(rows, cols, rng).qr().q()
}

impl ParafacModel {
    /// Random model: Gaussian unit-norm spatial and trial columns, complex
    /// Gaussian spectra.
    pub fn random(dims: Dims, rank: usize, rng: &mut Rng) -> Self {
        let mut trial = random_complex(dims.trials, rank, rng);
        for mut c in trial.column_iter_mut() {
            c.normalize_mut();
        }
        ParafacModel {
            spatial: random_unit_columns(dims.channels, rank, rng),
            spectral: random_complex(dims.freqs, rank, rng),
            trial,
        }
    }

    pub fn rank(&self) -> usize {
        self.spatial.ncols()
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.spatial.nrows(), self.spectral.nrows(), self.trial.nrows())
    }
}

impl Parafac2Model {
    pub fn random(dims: Dims, rank: usize, rng: &mut Rng) -> Self {
        let spatial = random_unit_columns(dims.channels, rank, rng);
        let spectral = random_complex(dims.freqs, rank, rng);
        let h = random_complex(rank, rank, rng);
        let q = (0..dims.freqs).map(|_| random_orthonormal(dims.trials, rank, rng)).collect();
        Parafac2Model { spatial, spectral, h, q }
    }

    pub fn rank(&self) -> usize {
        self.spatial.ncols()
    }

    pub fn dims(&self) -> Dims {
        let k = self.q.first().map_or(0, |q| q.nrows());
        Dims::new(self.spatial.nrows(), self.spectral.nrows(), k)
    }

    /// Largest relative deviation of `Y(f)·Y(f)ᴴ` from `H·Hᴴ` over frequencies.
    pub fn cross_product_deviation(&self) -> f64 {
        let hh = &self.h * self.h.adjoint();
        let denom = hh.norm();
        (0..self.q.len())
            .map(|f| {
                let y = self.trial_profiles(f);
                (&y * y.adjoint() - &hh).norm() / denom
            })
            .fold(0.0, f64::max)
    }

    /// Largest `‖Q(f)ᴴQ(f) − I‖_max` over frequencies.
    pub fn orthonormality_deviation(&self) -> f64 {
        let r = self.rank();
        self.q
            .iter()
            .map(|q| {
                (q.adjoint() * q - CMatrix::identity(r, r)).iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn trial_profiles(&self, f: usize) -> CMatrix {
        &self.h * self.q[f].adjoint()
    }

    /// Exact PARAFAC2 form of a PARAFAC model: with `Y = Q_y·R_y` (thin QR),
    /// `Yᵀ = R_yᵀ·Q_yᵀ`, so `H = R_yᵀ` and `Q(f) = conj(Q_y)` for every `f`.
    pub fn from_parafac(model: &ParafacModel) -> Self {
        let qr = model.trial.clone().qr();
        let (q_y, r_y) = (qr.q(), qr.r());
        Parafac2Model {
            spatial: model.spatial.clone(),
            spectral: model.spectral.clone(),
            h: r_y.transpose(),
            q: vec![q_y.conjugate(); model.spectral.nrows()],
        }
    }
}

impl FactorModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            FactorModel::Parafac(_) => Algorithm::Parafac,
            FactorModel::Parafac2(_) => Algorithm::Parafac2,
        }
    }

    pub fn rank(&self) -> usize {
        self.spatial().ncols()
    }

    pub fn dims(&self) -> Dims {
        match self {
            FactorModel::Parafac(m) => m.dims(),
            FactorModel::Parafac2(m) => m.dims(),
        }
    }

    pub fn spatial(&self) -> &RMatrix {
        match self {
            FactorModel::Parafac(m) => &m.spatial,
            FactorModel::Parafac2(m) => &m.spatial,
        }
    }

    pub fn spectral(&self) -> &CMatrix {
        match self {
            FactorModel::Parafac(m) => &m.spectral,
            FactorModel::Parafac2(m) => &m.spectral,
        }
    }

    /// `R × K` trial profiles at frequency `f`; row `i` is `y_i(f)`.
    pub fn trial_profiles(&self, f: usize) -> CMatrix {
        match self {
            FactorModel::Parafac(m) => m.trial.transpose(),
            FactorModel::Parafac2(m) => m.trial_profiles(f),
        }
    }

    /// Component activations `s_i(f, k) = p_i(f) · y_i(f, k)` over trials.
    pub fn component_series(&self, i: usize, f: usize) -> Vec<C64> {
        let p = self.spectral()[(f, i)];
        let y = self.trial_profiles(f);
        y.row(i).iter().map(|v| p * v).collect()
    }

    /// Model reconstruction `A · diag(P[f,:]) · Y(f)` at frequency `f`.
    pub fn reconstruct_slab(&self, f: usize) -> CMatrix {
        let y = self.trial_profiles(f);
        let p = self.spectral().row(f);
        let scaled = CMatrix::from_fn(y.nrows(), y.ncols(), |i, k| p[i] * y[(i, k)]);
        complexify(self.spatial()) * scaled
    }

    pub fn to_tensor(&self) -> Result<ComplexTensor> {
        let slabs: Vec<CMatrix> = (0..self.dims().freqs).map(|f| self.reconstruct_slab(f)).collect();
        ComplexTensor::from_slabs(&slabs)
    }
}

pub(crate) fn complexify(a: &RMatrix) -> CMatrix {
    a.map(|v| C64::new(v, 0.0))
}

/// Ratio of reconstruction energy to data energy, `Σ_f ‖Â(f)‖² / Σ_f ‖X(f)‖²`.
/// Zero data gives 0.
pub fn explained_variance(x: &ComplexTensor, model: &FactorModel) -> Result<f64> {
    if x.dims() != model.dims() {
        return Err(Error::invalid(format!(
            "model dims {:?} do not match tensor dims {:?}",
            model.dims(),
            x.dims()
        )));
    }
    let data = x.norm_squared();
    if data == 0.0 {
        return Ok(0.0);
    }
    let fitted: f64 = (0..x.dims().freqs).map(|f| model.reconstruct_slab(f).norm_squared()).sum();
    Ok(fitted / data)
}

/// Tucker congruence `|⟨x, y⟩| / (‖x‖‖y‖)`, 0 when either vector is zero.
pub fn congruence(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot.abs() / (nx * ny)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `permutation[t]` is the estimated component matched to truth `t`.
    pub permutation: Vec<usize>,
    /// Congruence of each matched pair, indexed by truth component.
    pub congruences: Vec<f64>,
}

impl Alignment {
    pub fn mean_congruence(&self) -> f64 {
        self.congruences.iter().sum::<f64>() / self.congruences.len().max(1) as f64
    }
}

/// Greedy maximal matching of spatial factors by absolute congruence.
pub fn align_components(estimated: &RMatrix, truth: &RMatrix) -> Result<Alignment> {
    let r = truth.ncols();
    if estimated.ncols() != r || estimated.nrows() != truth.nrows() {
        return Err(Error::invalid(format!(
            "cannot align {:?} against {:?}",
            estimated.shape(),
            truth.shape()
        )));
    }
    let mut scores = Vec::with_capacity(r * r);
    for t in 0..r {
        for e in 0..r {
            let c = congruence(estimated.column(e).as_slice(), truth.column(t).as_slice());
            scores.push((c, t, e));
        }
    }
    // Highest first; ties resolved by lower truth then estimate index.
    scores.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut permutation = vec![usize::MAX; r];
    let mut congruences = vec![0.0; r];
    let mut used = vec![false; r];
    for (c, t, e) in scores {
        if permutation[t] == usize::MAX && !used[e] {
            permutation[t] = e;
            congruences[t] = c;
            used[e] = true;
        }
    }
    Ok(Alignment { permutation, congruences })
}

pub(crate) fn check_rank(dims: Dims, rank: usize) -> Result<()> {
    let cap = dims.channels.min(dims.freqs).min(dims.trials);
    if rank == 0 || rank > cap {
        return Err(Error::invalid(format!(
            "rank {rank} must lie in 1..={cap} for a {}×{}×{} tensor",
            dims.channels, dims.freqs, dims.trials
        )));
    }
    if rank > RECOMMENDED_MAX_RANK {
        log::warn!("rank {rank} exceeds {RECOMMENDED_MAX_RANK}; components may not be unique");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SpatialStart {
    Svd,
    Random,
}

/// Spatial factor for a fresh start. The random variant uses its own stream
/// so the remaining draws of a start do not depend on the variant.
pub(crate) fn spatial_start(x: &ComplexTensor, rank: usize, kind: SpatialStart, seed: u64) -> RMatrix {
    match kind {
        SpatialStart::Svd => svd_spatial_init(x, rank),
        SpatialStart::Random => random_unit_columns(x.dims().channels, rank, &mut seeded(derive_seed(seed, 0x5a7))),
    }
}

/// Real spatial start: leading left singular vectors of the mean magnitude
/// slab `mean_f |X(f)|`.
pub(crate) fn svd_spatial_init(x: &ComplexTensor, rank: usize) -> RMatrix {
    let d = x.dims();
    let mut mean_abs = RMatrix::zeros(d.channels, d.trials);
    for slab in x.slabs() {
        mean_abs.zip_apply(&slab, |acc, z| *acc += z.norm());
    }
    mean_abs /= d.freqs as f64;
    let svd = mean_abs.svd(true, false);
    let u = svd.u.expect("U requested");
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut a = RMatrix::from_fn(d.channels, rank, |i, j| u[(i, order[j])]);
    for mut c in a.column_iter_mut() {
        if c.norm() == 0.0 {
            c.fill(0.0);
            c[0] = 1.0;
        }
    }
    a
}

/// Per-slab Frobenius norms, used to scale random spectral starts.
pub(crate) fn slab_norms(x: &ComplexTensor) -> DVector<f64> {
    DVector::from_iterator(x.dims().freqs, x.slabs().map(|s| s.norm()))
}

/// Convergence rule shared by both algorithms: the loss change relative to
/// the previous loss falls below `tol`, or the fit is exact to rounding.
pub(crate) fn has_converged(prev: f64, cur: f64, data_norm2: f64, tol: f64) -> bool {
    data_norm2 == 0.0 || cur <= 1e-14 * data_norm2 || (prev - cur).abs() <= tol * prev
}

/// Direct squared error `Σ_f ‖X(f) − Â(f)‖²`.
pub fn squared_error(x: &ComplexTensor, model: &FactorModel) -> Result<f64> {
    if x.dims() != model.dims() {
        return Err(Error::invalid("model and tensor dims differ"));
    }
    Ok((0..x.dims().freqs).map(|f| (x.slab(f) - model.reconstruct_slab(f)).norm_squared()).sum())
}

/// Moves column norms of the real factor into the spectral factor.
pub(crate) fn normalize_spatial(spatial: &mut RMatrix, spectral: &mut CMatrix) {
    for (mut a, mut p) in spatial.column_iter_mut().zip(spectral.column_iter_mut()) {
        let n = a.norm();
        if n > 0.0 {
            a /= n;
            p *= C64::new(n, 0.0);
        }
    }
}

#[cfg(test)]
mod tests;
