//! Synthetic multichannel recordings with a known coupled source pair.
//!
//! A scene mixes (i) an optional pair of narrowband autoregressive sources
//! where one drives the other through lagged cross terms, (ii) a large set of
//! pink-noise background sources, and (iii) white sensor noise. Sources reach
//! the electrodes through the lead fields of a parametric head model: unit
//! vectors shaped as Gaussian blobs around a source position, with electrodes
//! on the upper unit hemisphere.
//!
//! The power ratio (PR) is enforced in sensor space over the full band:
//! `‖A_c S_c g‖² / (‖A_c S_c g‖² + ‖A_n S_n‖²) = pr` exactly.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, Vector3};
use rand::Rng as _;
use rand_distr::{Normal, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};
use crate::tensor::RMatrix;

/// Samples discarded before an AR realization is recorded.
pub const BURN_IN: usize = 1000;
/// A realized AR sample above this magnitude is treated as divergence.
const DIVERGENCE_LIMIT: f64 = 1e6;
const MAX_DESIGN_ATTEMPTS: usize = 1000;

/// Univariate AR model `s(t) = Σ_τ coeffs[τ-1]·s(t-τ) + w(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArSource {
    pub order: usize,
    pub coeffs: Vec<f64>,
    pub center_freq: f64,
    pub pole_radius: f64,
}

impl ArSource {
    /// AR model whose characteristic roots are exactly `poles`. Non-real
    /// poles must come with their conjugates for the coefficients to be real.
    pub fn from_poles(poles: &[Complex<f64>], center_freq: f64, pole_radius: f64) -> Self {
        // Expand Π (z − p) = z^k + c_1 z^{k-1} + … + c_k
        let mut poly = vec![Complex::new(1.0, 0.0)];
        for &p in poles {
            let mut next = vec![Complex::new(0.0, 0.0); poly.len() + 1];
            for (i, &c) in poly.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c * p;
            }
            poly = next;
        }
        let coeffs = poly[1..].iter().map(|c| -c.re).collect::<Vec<_>>();
        ArSource { order: coeffs.len(), coeffs, center_freq, pole_radius }
    }

    /// Second-order resonator with a conjugate pole pair at `center_hz`.
    pub fn resonator(center_hz: f64, radius: f64, fs: f64) -> Self {
        let theta = 2.0 * PI * center_hz / fs;
        let p = Complex::from_polar(radius, theta);
        Self::from_poles(&[p, p.conj()], center_hz, radius)
    }

    /// Power spectral density (unit innovation variance) at `freq` Hz.
    pub fn psd(&self, freq: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq / fs;
        let mut denom = Complex::new(1.0, 0.0);
        for (tau, &a) in self.coeffs.iter().enumerate() {
            denom -= Complex::from_polar(a, -w * (tau + 1) as f64);
        }
        1.0 / denom.norm_sqr()
    }

    /// Frequency of the PSD maximum on a grid of `fs/2 / 5000` Hz spacing.
    pub fn peak_frequency(&self, fs: f64) -> f64 {
        const GRID: usize = 5000;
        (1..GRID)
            .map(|j| fs / 2.0 * j as f64 / GRID as f64)
            .map(|f| (f, self.psd(f, fs)))
            .fold((0.0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    }

    pub fn spectral_radius(&self) -> f64 {
        var_spectral_radius_dim(1, self.order, |tau, _, _| self.coeffs[tau])
    }
}

/// Spectral radius of the companion matrix of a `d`-variate VAR(order) with
/// lag-τ coefficient `coef(τ, row, col)` (τ counted from 0).
fn var_spectral_radius_dim(
    d: usize,
    order: usize,
    coef: impl Fn(usize, usize, usize) -> f64,
) -> f64 {
    let n = d * order;
    if n == 0 {
        return 0.0;
    }
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for tau in 0..order {
        for r in 0..d {
            for c in 0..d {
                comp[(r, tau * d + c)] = coef(tau, r, c);
            }
        }
    }
    for i in d..n {
        comp[(i, i - d)] = 1.0;
    }
    comp.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Designs a stable narrowband AR source by pole placement.
///
/// A conjugate pole pair sits at the band center with radius drawn from
/// `[0.9, 0.98]`; the remaining `order − 2` poles have radius at most 0.5 and
/// random angles (one real pole when the leftover count is odd). A design is
/// redrawn until its PSD peak falls inside `band`.
pub fn design_ar_source(band: (f64, f64), fs: f64, order: usize, rng: &mut Rng) -> Result<ArSource> {
    let (lo, hi) = band;
    if order < 2 {
        return Err(Error::invalid(format!("AR order must be at least 2, got {order}")));
    }
    if !(lo > 0.0 && hi > lo && hi < fs / 2.0) {
        return Err(Error::invalid(format!("band ({lo}, {hi}) must lie within (0, {})", fs / 2.0)));
    }
    let center = 0.5 * (lo + hi);
    let theta = 2.0 * PI * center / fs;
    for _ in 0..MAX_DESIGN_ATTEMPTS {
        let radius = rng.random_range(0.9..=0.98);
        let main = Complex::from_polar(radius, theta);
        let mut poles = vec![main, main.conj()];
        let mut left = order - 2;
        while left >= 2 {
            let p = Complex::from_polar(rng.random_range(0.0..=0.5), rng.random_range(0.0..PI));
            poles.push(p);
            poles.push(p.conj());
            left -= 2;
        }
        if left == 1 {
            poles.push(Complex::new(rng.random_range(-0.5..=0.5), 0.0));
        }
        let src = ArSource::from_poles(&poles, center, radius);
        let peak = src.peak_frequency(fs);
        if peak >= lo && peak <= hi && src.spectral_radius() < 1.0 {
            return Ok(src);
        }
    }
    Err(Error::GenerationFailure(format!(
        "no stable AR({order}) design peaks inside ({lo}, {hi}) Hz after {MAX_DESIGN_ATTEMPTS} attempts"
    )))
}

/// Bivariate AR system. `cross_ij[τ]` feeds `s_j(t-τ-1)` into `s_i(t)`,
/// `cross_ji[τ]` feeds `s_i` into `s_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPair {
    pub source_i: ArSource,
    pub source_j: ArSource,
    pub cross_ij: Vec<f64>,
    pub cross_ji: Vec<f64>,
}

impl CoupledPair {
    pub fn uncoupled(source_i: ArSource, source_j: ArSource) -> Self {
        CoupledPair { source_i, source_j, cross_ij: vec![], cross_ji: vec![] }
    }

    pub fn order(&self) -> usize {
        [self.source_i.order, self.source_j.order, self.cross_ij.len(), self.cross_ji.len()]
            .into_iter()
            .max()
            .unwrap_or(0)
    }

    /// Lag-τ (0-based) 2×2 coefficient entry.
    pub fn coefficient(&self, tau: usize, row: usize, col: usize) -> f64 {
        let v = match (row, col) {
            (0, 0) => &self.source_i.coeffs,
            (0, 1) => &self.cross_ij,
            (1, 0) => &self.cross_ji,
            _ => &self.source_j.coeffs,
        };
        v.get(tau).copied().unwrap_or(0.0)
    }

    pub fn is_coupled(&self) -> bool {
        self.cross_ij.iter().chain(&self.cross_ji).any(|&h| h != 0.0)
    }

    /// Spectral radius of the joint companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        var_spectral_radius_dim(2, self.order(), |tau, r, c| self.coefficient(tau, r, c))
    }
}

/// Couples two sources unidirectionally: `s_j` drives `s_i` through lags
/// `1..=order` with coefficients drawn from N(0, 0.25), shrunk by 0.9 until
/// the joint system is stable.
pub fn couple(source_i: ArSource, source_j: ArSource, rng: &mut Rng) -> Result<CoupledPair> {
    let order = source_i.order.max(source_j.order);
    let normal = Normal::new(0.0, 0.5).expect("valid normal");
    let mut pair = CoupledPair {
        cross_ij: (0..order).map(|_| rng.sample(normal)).collect(),
        cross_ji: vec![0.0; order],
        source_i,
        source_j,
    };
    for _ in 0..200 {
        if pair.spectral_radius() < 1.0 {
            return Ok(pair);
        }
        pair.cross_ij.iter_mut().for_each(|h| *h *= 0.9);
    }
    Err(Error::GenerationFailure("could not stabilize coupled pair".into()))
}

/// Realizes the bivariate AR recursion driven by i.i.d. unit-variance
/// Gaussian innovations, discarding [`BURN_IN`] samples.
pub fn simulate_coupled_pair(
    pair: &CoupledPair,
    samples: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let order = pair.order();
    if samples < 10 * order {
        return Err(Error::invalid(format!(
            "need at least {} samples for order {order}, got {samples}",
            10 * order
        )));
    }
    let radius = pair.spectral_radius();
    if radius >= 1.0 {
        return Err(Error::invalid(format!("coupled pair is unstable (spectral radius {radius})")));
    }
    let total = samples + BURN_IN;
    let mut si = vec![0.0; total];
    let mut sj = vec![0.0; total];
    for t in 0..total {
        let mut a: f64 = rng.sample(StandardNormal);
        let mut b: f64 = rng.sample(StandardNormal);
        for tau in 0..order.min(t) {
            let (pi, pj) = (si[t - tau - 1], sj[t - tau - 1]);
            a += pair.coefficient(tau, 0, 0) * pi + pair.coefficient(tau, 0, 1) * pj;
            b += pair.coefficient(tau, 1, 0) * pi + pair.coefficient(tau, 1, 1) * pj;
        }
        if a.abs() > DIVERGENCE_LIMIT || b.abs() > DIVERGENCE_LIMIT || !a.is_finite() || !b.is_finite() {
            return Err(Error::GenerationFailure(format!("AR recursion diverged at sample {t}")));
        }
        si[t] = a;
        sj[t] = b;
    }
    Ok((si.split_off(BURN_IN), sj.split_off(BURN_IN)))
}

/// Zero-mean, unit-variance 1/f noise by FFT amplitude shaping of white
/// Gaussian noise (`|H(k)| ∝ k^{-1/2}`, DC removed).
pub fn pink_noise(samples: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    Ok(PinkNoise::new(samples)?.generate(rng))
}

/// Reusable pink-noise generator for a fixed length; holds the FFT plans.
pub struct PinkNoise {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PinkNoise {
    pub fn new(samples: usize) -> Result<Self> {
        if samples < 64 {
            return Err(Error::invalid(format!("pink noise needs at least 64 samples, got {samples}")));
        }
        let mut planner = FftPlanner::<f64>::new();
        Ok(PinkNoise { forward: planner.plan_fft_forward(samples), inverse: planner.plan_fft_inverse(samples) })
    }

    pub fn generate(&self, rng: &mut Rng) -> Vec<f64> {
        let samples = self.forward.len();
        let mut buf: Vec<Complex<f64>> =
            (0..samples).map(|_| Complex::new(rng.sample(StandardNormal), 0.0)).collect();
        self.forward.process(&mut buf);
        buf[0] = Complex::new(0.0, 0.0);
        for (k, z) in buf.iter_mut().enumerate().skip(1) {
            let f = k.min(samples - k) as f64;
            *z /= f.sqrt();
        }
        self.inverse.process(&mut buf);
        let mut out: Vec<f64> = buf.into_iter().map(|z| z.re).collect();
        standardize(&mut out);
        out
    }
}

pub(crate) fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    x.iter_mut().for_each(|v| *v = (*v - mean) * inv);
}

/// Sign pattern of a 3-D position, `x ≥ 0` as bit 0, `y` bit 1, `z` bit 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Octant(pub u8);

impl Octant {
    pub fn of(p: &Vector3<f64>) -> Self {
        Octant(u8::from(p.x >= 0.0) | u8::from(p.y >= 0.0) << 1 | u8::from(p.z >= 0.0) << 2)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        Octant::of(p) == *self
    }
}

impl fmt::Display for Octant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in 0..3 {
            f.write_str(if self.0 >> bit & 1 == 1 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadFieldSource {
    pub position: [f64; 3],
    pub sigma: f64,
    pub octant: Octant,
}

impl LeadFieldSource {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub electrodes: Vec<Vector3<f64>>,
    /// `m × n` matrix, one unit-norm lead field per column.
    pub lead_fields: RMatrix,
    pub sources: Vec<LeadFieldSource>,
}

/// Electrodes on the upper unit hemisphere by a Fibonacci lattice. Depends
/// only on the channel count.
pub fn electrode_positions(m: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..m)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / m as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

pub fn gaussian_lead_field(electrodes: &[Vector3<f64>], source: &Vector3<f64>, sigma: f64) -> Vec<f64> {
    let mut a: Vec<f64> = electrodes
        .iter()
        .map(|e| (-(e - source).norm_squared() / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    a.iter_mut().for_each(|v| *v /= norm);
    a
}

pub fn build_head_model(m: usize, n_leadfields: usize, rng: &mut Rng) -> Result<HeadModel> {
    if m < 16 {
        return Err(Error::invalid(format!("head model needs at least 16 channels, got {m}")));
    }
    if n_leadfields < 8 {
        return Err(Error::invalid(format!("head model needs at least 8 lead fields, got {n_leadfields}")));
    }
    let electrodes = electrode_positions(m);
    let mut lead_fields = RMatrix::zeros(m, n_leadfields);
    let mut sources = Vec::with_capacity(n_leadfields);
    for j in 0..n_leadfields {
        let pos = loop {
            let p = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if p.norm_squared() <= 1.0 {
                break p;
            }
        };
        let sigma = rng.random_range(0.3..=0.6);
        let col = gaussian_lead_field(&electrodes, &pos, sigma);
        lead_fields.set_column(j, &nalgebra::DVector::from_vec(col));
        sources.push(LeadFieldSource { position: pos.into(), sigma, octant: Octant::of(&pos) });
    }
    Ok(HeadModel { electrodes, lead_fields, sources })
}

impl HeadModel {
    pub fn channels(&self) -> usize {
        self.electrodes.len()
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Lead fields whose source lies under the electrode cap (`z > 0`), the
    /// pool coupled sources are drawn from.
    pub fn cortical_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.sources[j].position[2] > 0.0).collect()
    }

    pub fn nearest_electrode(&self, p: &Vector3<f64>) -> usize {
        (0..self.channels())
            .min_by(|&a, &b| {
                (self.electrodes[a] - p).norm().total_cmp(&(self.electrodes[b] - p).norm())
            })
            .expect("at least one electrode")
    }
}

/// Ground truth for the coupled part of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledScene {
    pub pair: CoupledPair,
    /// Lead-field indices for `s_i` and `s_j`.
    pub leadfields: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub leadfield: usize,
    /// Pink-noise stream seed, always below `2^63`.
    pub seed: u64,
}

/// Complete description of one synthetic dataset. Re-rendering a scene
/// against the same head model reproduces the recording bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    pub has_coupling: bool,
    pub pr: f64,
    pub sensor_noise_frac: f64,
    pub seed: u64,
    pub coupled: Option<CoupledScene>,
    pub noise_sources: Vec<NoiseSource>,
}

/// Parameters for drawing random scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub noise_sources: usize,
    pub ar_order: usize,
    pub band_hz: [f64; 2],
    pub fs: f64,
    pub sensor_noise_frac: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { noise_sources: 500, ar_order: 5, band_hz: [8.0, 12.0], fs: 100.0, sensor_noise_frac: 0.1 }
    }
}

impl SourceScene {
    /// Draws a scene. Coupled sources use two distinct lead fields from the
    /// cortical pool; noise sources are drawn uniformly from all lead fields.
    pub fn generate(cfg: &SceneConfig, head: &HeadModel, has_coupling: bool, pr: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&pr) {
            return Err(Error::invalid(format!("pr must lie in [0, 1), got {pr}")));
        }
        let mut rng = seeded(derive_seed(seed, 0x5CE7E));
        let coupled = if has_coupling {
            let pool = head.cortical_indices();
            if pool.len() < 2 {
                return Err(Error::invalid("head model has fewer than two cortical lead fields"));
            }
            let first = pool[rng.random_range(0..pool.len())];
            let second = loop {
                let c = pool[rng.random_range(0..pool.len())];
                if c != first {
                    break c;
                }
            };
            let band = (cfg.band_hz[0], cfg.band_hz[1]);
            let si = design_ar_source(band, cfg.fs, cfg.ar_order, &mut rng)?;
            let sj = design_ar_source(band, cfg.fs, cfg.ar_order, &mut rng)?;
            Some(CoupledScene { pair: couple(si, sj, &mut rng)?, leadfields: [first, second] })
        } else {
            None
        };
        let noise_sources = (0..cfg.noise_sources)
            .map(|_| NoiseSource { leadfield: rng.random_range(0..head.len()), seed: rng.random::<u64>() >> 1 })
            .collect();
        Ok(SourceScene {
            has_coupling,
            pr: if has_coupling { pr } else { 0.0 },
            sensor_noise_frac: cfg.sensor_noise_frac,
            seed,
            coupled,
            noise_sources,
        })
    }

    fn validate(&self, head: &HeadModel) -> Result<()> {
        if self.has_coupling != self.coupled.is_some() {
            return Err(Error::invalid("has_coupling must match presence of a coupled pair"));
        }
        if !self.has_coupling && self.pr != 0.0 {
            return Err(Error::invalid(format!("pr = {} requested for a scene without coupling", self.pr)));
        }
        if !(0.0..1.0).contains(&self.pr) {
            return Err(Error::invalid(format!("pr must lie in [0, 1), got {}", self.pr)));
        }
        if !(self.sensor_noise_frac >= 0.0 && self.sensor_noise_frac.is_finite()) {
            return Err(Error::invalid("sensor_noise_frac must be a nonnegative number"));
        }
        let n = head.len();
        let bad = self
            .noise_sources
            .iter()
            .map(|s| s.leadfield)
            .chain(self.coupled.iter().flat_map(|c| c.leadfields))
            .find(|&j| j >= n);
        if let Some(j) = bad {
            return Err(Error::invalid(format!("lead-field index {j} out of range ({n} available)")));
        }
        Ok(())
    }
}

/// A rendered recording with its additive parts kept apart.
#[derive(Debug, Clone)]
pub struct Rendered {
    /// `m × T` sensor data: `coupled + noise + sensor`.
    pub data: RMatrix,
    /// `A_c·S_c·g`, absent for uncoupled scenes.
    pub coupled: Option<RMatrix>,
    /// `A_n·S_n`.
    pub noise: RMatrix,
    /// White sensor noise `E`.
    pub sensor: RMatrix,
    /// The two standardized coupled source series before mixing.
    pub sources: Option<[Vec<f64>; 2]>,
    pub gain: f64,
}

impl Rendered {
    pub fn power_ratio(&self) -> f64 {
        let pc = self.coupled.as_ref().map_or(0.0, |c| c.norm_squared());
        let pn = self.noise.norm_squared();
        if pc + pn == 0.0 {
            0.0
        } else {
            pc / (pc + pn)
        }
    }
}

pub fn render_scene(scene: &SourceScene, head: &HeadModel, duration_s: f64, fs: f64) -> Result<Rendered> {
    scene.validate(head)?;
    let samples = (duration_s * fs).round() as usize;
    if samples == 0 {
        return Err(Error::invalid("scene duration yields zero samples"));
    }
    let m = head.channels();

    let mut mixing = RMatrix::zeros(m, scene.noise_sources.len());
    let mut series = RMatrix::zeros(scene.noise_sources.len(), samples);
    let pink = PinkNoise::new(samples)?;
    for (n, src) in scene.noise_sources.iter().enumerate() {
        mixing.set_column(n, &head.lead_fields.column(src.leadfield));
        let s = pink.generate(&mut seeded(src.seed));
        series.row_mut(n).iter_mut().zip(s).for_each(|(d, v)| *d = v);
    }
    let noise = mixing * series;
    let noise_power = noise.norm_squared();

    let (coupled, sources, gain) = match &scene.coupled {
        Some(c) => {
            let mut rng = seeded(derive_seed(scene.seed, 0xC0_0B1E));
            let (mut si, mut sj) = simulate_coupled_pair(&c.pair, samples, &mut rng)?;
            standardize(&mut si);
            standardize(&mut sj);
            let ai = head.lead_fields.column(c.leadfields[0]);
            let aj = head.lead_fields.column(c.leadfields[1]);
            let mut mixed = RMatrix::from_fn(m, samples, |e, t| ai[e] * si[t] + aj[e] * sj[t]);
            let pc = mixed.norm_squared();
            let gain = if scene.pr == 0.0 || pc == 0.0 {
                0.0
            } else if noise_power == 0.0 {
                1.0
            } else {
                (scene.pr * noise_power / ((1.0 - scene.pr) * pc)).sqrt()
            };
            mixed *= gain;
            (Some(mixed), Some([si, sj]), gain)
        }
        None => (None, None, 0.0),
    };

    let signal = match &coupled {
        Some(c) => c + &noise,
        None => noise.clone(),
    };
    let sensor_var = scene.sensor_noise_frac * signal.norm_squared() / (m * samples) as f64;
    let mut rng = seeded(derive_seed(scene.seed, 0x5E_4503));
    let sd = sensor_var.sqrt();
    let sensor = RMatrix::from_fn(m, samples, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    let data = signal + &sensor;
    Ok(Rendered { data, coupled, noise, sensor, sources, gain })
}
