//! Synthetic-benchmark harness: generate labelled datasets over a grid of
//! power ratios, fit each with both models, and score coupling detection
//! (CONN) and source localization (LOC).
//!
//! CONN awards `+1` per dataset whose coupling label is predicted correctly
//! and `−2` otherwise, using the threshold on the best component coupling
//! that maximizes the mean award. LOC awards `±0.5` per coupled source for a
//! correctly/incorrectly predicted octant.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{band_bins, best_pair, scalp_map, ConnectivityMap};
use crate::error::{Error, Result};
use crate::factor::{multi_init_fit, Algorithm, FactorModel, MultiInitOptions};
use crate::rng::{derive_seed, seeded};
use crate::synth::{build_head_model, render_scene, HeadModel, Octant, SceneConfig, SourceScene};
use crate::tensor::{ComplexTensor, RMatrix};
use crate::tensorize::{tensorize, TensorizeConfig};

/// Largest fraction of failed datasets a sweep tolerates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub pr_values: Vec<f64>,
    pub n_datasets: usize,
    pub duration_s: f64,
    pub algorithms: Vec<Algorithm>,
    pub ranks: Vec<usize>,
    pub base_seed: u64,
    pub channels: usize,
    pub n_leadfields: usize,
    pub head_seed: u64,
    /// Band over which component coupling is measured, in Hz.
    pub band_hz: [f64; 2],
    pub scene: SceneConfig,
    pub tensorize: TensorizeConfig,
    pub multi_init: MultiInitOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            pr_values: vec![0.2, 0.4, 0.6, 0.8],
            n_datasets: 20,
            duration_s: 30.0,
            algorithms: vec![Algorithm::Parafac, Algorithm::Parafac2],
            ranks: vec![8],
            base_seed: 0,
            channels: 108,
            n_leadfields: 2000,
            head_seed: 2417,
            band_hz: [8.0, 12.0],
            scene: SceneConfig::default(),
            tensorize: TensorizeConfig::default(),
            multi_init: MultiInitOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pr_values.is_empty() || self.pr_values.iter().any(|p| !(0.2..=0.9).contains(p)) {
            return Err(Error::invalid("pr_values must be non-empty and lie in [0.2, 0.9]"));
        }
        if self.n_datasets < 2 {
            return Err(Error::invalid("n_datasets must be at least 2 so both labels occur"));
        }
        if self.algorithms.is_empty() || self.ranks.is_empty() || self.ranks.contains(&0) {
            return Err(Error::invalid("need at least one algorithm and positive ranks"));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::invalid("duration_s must be positive"));
        }
        if !(self.band_hz[0] <= self.band_hz[1]) {
            return Err(Error::invalid("band_hz must be ordered lo ≤ hi"));
        }
        Ok(())
    }

    pub fn band_bins(&self) -> Result<Vec<usize>> {
        band_bins(&self.tensorize.frequencies(self.scene.fs)?, (self.band_hz[0], self.band_hz[1]))
    }

    pub fn head_model(&self) -> Result<HeadModel> {
        build_head_model(self.channels, self.n_leadfields, &mut seeded(self.head_seed))
    }

    /// Coupling labels for datasets `0..n_datasets`: a seeded shuffle of a
    /// half-coupled list, so each dataset is coupled with probability 0.5.
    pub fn labels(&self) -> Vec<bool> {
        let mut labels: Vec<bool> = (0..self.n_datasets).map(|i| i < self.n_datasets / 2).collect();
        let mut rng = seeded(derive_seed(self.base_seed, 0x1ABE1));
        if self.n_datasets % 2 == 1 {
            use rand::Rng as _;
            labels[self.n_datasets - 1] = rng.random_bool(0.5);
        }
        labels.shuffle(&mut rng);
        labels
    }
}

/// One fitted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub dataset: usize,
    pub pr: f64,
    pub has_coupling: bool,
    pub algo: Algorithm,
    pub rank: usize,
    pub seed: u64,
    pub ev: f64,
    pub best_coupling: f64,
    pub pair: Option<(usize, usize)>,
    pub predicted_octants: Option<[Octant; 2]>,
    pub true_octants: Option<[Octant; 2]>,
    pub loc: Option<f64>,
}

/// Aggregates for one algorithm, rank and PR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub algo: Algorithm,
    pub rank: usize,
    pub pr: f64,
    pub n_records: usize,
    pub mean_ev: f64,
    pub conn: f64,
    /// Written as the string `"inf"` or `"-inf"` when infinite.
    #[serde(with = "extended_f64")]
    pub conn_threshold: f64,
    /// Mean LOC over coupled datasets.
    pub loc: f64,
    /// Mean best coupling over coupled datasets.
    pub mean_coupling_coupled: f64,
    pub mean_coupling_uncoupled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub records: Vec<BenchmarkRecord>,
    pub failed_datasets: Vec<(f64, usize)>,
}

impl SweepResult {
    pub fn point(&self, algo: Algorithm, rank: usize, pr: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.algo == algo && p.rank == rank && p.pr == pr)
    }

    /// Points of one algorithm and rank in increasing PR order.
    pub fn curve(&self, algo: Algorithm, rank: usize) -> Vec<&SweepPoint> {
        let mut v: Vec<&SweepPoint> = self.points.iter().filter(|p| p.algo == algo && p.rank == rank).collect();
        v.sort_by(|a, b| a.pr.total_cmp(&b.pr));
        v
    }
}

mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => "inf".serialize(s),
            f64::NEG_INFINITY => "-inf".serialize(s),
            x => x.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number, found '{t}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnScore {
    pub score: f64,
    pub threshold: f64,
}

/// CONN score of `(coupling, truly_coupled)` pairs. Candidate thresholds are
/// `−∞`, every midpoint between consecutive distinct couplings, and `+∞`; a
/// dataset is called coupled iff its coupling exceeds the threshold. The
/// first maximizing threshold in increasing order is returned.
pub fn conn_score(records: &[(f64, bool)]) -> Result<ConnScore> {
    if !records.iter().any(|r| r.1) || !records.iter().any(|r| !r.1) {
        return Err(Error::invalid("CONN needs both coupled and uncoupled datasets"));
    }
    if records.iter().any(|r| r.0.is_nan()) {
        return Err(Error::invalid("coupling values must not be NaN"));
    }
    let mut values: Vec<f64> = records.iter().map(|r| r.0).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(f64::INFINITY);

    let n = records.len() as f64;
    let mut best = ConnScore { score: f64::NEG_INFINITY, threshold: f64::NEG_INFINITY };
    for t in thresholds {
        let total: f64 = records.iter().map(|&(c, truth)| if (c > t) == truth { 1.0 } else { -2.0 }).sum();
        let score = total / n;
        if score > best.score {
            best = ConnScore { score, threshold: t };
        }
    }
    Ok(best)
}

/// Lead fields centred and scaled to unit norm, for Pearson correlation by
/// dot product.
pub struct LeadFieldIndex {
    standardized: RMatrix,
    octants: Vec<Octant>,
}

fn standardize_column(v: &mut nalgebra::DVectorViewMut<'_, f64>) {
    let mean = v.mean();
    v.add_scalar_mut(-mean);
    let n = v.norm();
    if n > 0.0 {
        *v /= n;
    }
}

impl LeadFieldIndex {
    pub fn new(head: &HeadModel) -> Self {
        let mut standardized = head.lead_fields.clone();
        for mut c in standardized.column_iter_mut() {
            standardize_column(&mut c);
        }
        LeadFieldIndex { standardized, octants: head.sources.iter().map(|s| s.octant).collect() }
    }

    /// Absolute Pearson correlations of `v` with every lead field.
    pub fn correlations(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.standardized.nrows() {
            return Err(Error::invalid("spatial vector length differs from the channel count"));
        }
        let mut z = nalgebra::DVector::from_column_slice(v);
        standardize_column(&mut z.column_mut(0));
        Ok((self.standardized.tr_mul(&z)).iter().map(|c| c.abs()).collect())
    }

    /// Octant of the best-correlated lead field.
    pub fn predict(&self, v: &[f64]) -> Result<Octant> {
        let c = self.correlations(v)?;
        let best = (0..c.len()).fold(0, |b, j| if c[j] > c[b] { j } else { b });
        Ok(self.octants[best])
    }
}

/// LOC score of two estimated spatial components against the two true
/// coupled lead fields. Each estimate is assigned to a truth by the matching
/// with the larger summed correlation; returns the score and the predicted
/// octants in truth order.
pub fn loc_score(
    estimated: [&[f64]; 2],
    truth: Option<[usize; 2]>,
    index: &LeadFieldIndex,
) -> Result<(f64, [Octant; 2])> {
    let truth = truth.ok_or_else(|| Error::invalid("LOC needs the true coupled lead fields"))?;
    if truth.iter().any(|&t| t >= index.octants.len()) {
        return Err(Error::invalid("true lead-field index out of range"));
    }
    let corr = [index.correlations(estimated[0])?, index.correlations(estimated[1])?];
    let straight = corr[0][truth[0]] + corr[1][truth[1]];
    let crossed = corr[0][truth[1]] + corr[1][truth[0]];
    let order = if crossed > straight { [1, 0] } else { [0, 1] };
    let mut score = 0.0;
    let mut predicted = [Octant(0); 2];
    for (t, &e) in order.iter().enumerate() {
        let best = (0..corr[e].len()).fold(0, |b, j| if corr[e][j] > corr[e][b] { j } else { b });
        predicted[t] = index.octants[best];
        score += if predicted[t] == index.octants[truth[t]] { 0.5 } else { -0.5 };
    }
    Ok((score, predicted))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("Spearman needs two equal series of length ≥ 2"));
    }
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// A generated dataset ready for fitting.
pub struct Dataset {
    pub scene: SourceScene,
    pub tensor: ComplexTensor,
}

pub fn make_dataset(cfg: &SweepConfig, head: &HeadModel, pr: f64, has_coupling: bool, seed: u64) -> Result<Dataset> {
    let scene = SourceScene::generate(&cfg.scene, head, has_coupling, pr, seed)?;
    let rendered = render_scene(&scene, head, cfg.duration_s, cfg.scene.fs)?;
    let tensor = tensorize(&rendered.data, cfg.scene.fs, &cfg.tensorize)?;
    Ok(Dataset { scene, tensor })
}

/// Multi-start fit scored and selected by the best band coupling.
pub fn fit_dataset(
    x: &ComplexTensor,
    algo: Algorithm,
    rank: usize,
    bins: &[usize],
    opts: &MultiInitOptions,
) -> Result<(FactorModel, f64, f64)> {
    let score = |m: &FactorModel| best_pair(m, bins).ok().flatten().map_or(0.0, |b| b.2);
    let res = multi_init_fit(x, rank, algo, opts, score)?;
    let coupling = score(&res.model);
    Ok((res.model, res.report.explained_variance, coupling))
}

fn evaluate(
    cfg: &SweepConfig,
    data: &Dataset,
    index: &LeadFieldIndex,
    head: &HeadModel,
    bins: &[usize],
    dataset: usize,
    pr: f64,
    algo: Algorithm,
    rank: usize,
) -> Result<BenchmarkRecord> {
    let mut opts = cfg.multi_init.clone();
    opts.fit.seed = derive_seed(data.scene.seed, rank as u64);
    let (model, ev, coupling) = fit_dataset(&data.tensor, algo, rank, bins, &opts)?;
    let pair = best_pair(&model, bins)?.map(|(i, j, _)| (i, j));
    let truth = data.scene.coupled.as_ref().map(|c| c.leadfields);
    let true_octants = truth.map(|t| [head.sources[t[0]].octant, head.sources[t[1]].octant]);
    let (predicted_octants, loc) = match pair {
        Some((i, j)) => {
            let a = model.spatial();
            let cols = [a.column(i), a.column(j)];
            if truth.is_some() {
                let (score, predicted) = loc_score([cols[0].as_slice(), cols[1].as_slice()], truth, index)?;
                (Some(predicted), Some(score))
            } else {
                (Some([index.predict(cols[0].as_slice())?, index.predict(cols[1].as_slice())?]), None)
            }
        }
        None => (None, None),
    };
    Ok(BenchmarkRecord {
        dataset,
        pr,
        has_coupling: data.scene.has_coupling,
        algo,
        rank,
        seed: data.scene.seed,
        ev,
        best_coupling: coupling,
        pair,
        predicted_octants,
        true_octants,
        loc,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Runs the full sweep. Dataset `i` at every PR uses seed `base_seed + i`
/// and the same coupling label, so PR values are compared on paired scenes.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let head = cfg.head_model()?;
    let index = LeadFieldIndex::new(&head);
    let bins = cfg.band_bins()?;
    let labels = cfg.labels();
    // Uncoupled scenes do not depend on the PR, so each is fitted once and
    // its records are shared by every PR.
    let mut jobs: Vec<(Option<f64>, usize)> = (0..cfg.n_datasets).filter(|&i| !labels[i]).map(|i| (None, i)).collect();
    for &pr in &cfg.pr_values {
        jobs.extend((0..cfg.n_datasets).filter(|&i| labels[i]).map(|i| (Some(pr), i)));
    }
    let done = AtomicUsize::new(0);

    let outcomes: Vec<Result<Vec<BenchmarkRecord>>> = jobs
        .par_iter()
        .map(|&(pr, i)| {
            let seed = cfg.base_seed.wrapping_add(i as u64);
            let data = make_dataset(cfg, &head, pr.unwrap_or(0.0), labels[i], seed)?;
            let mut out = Vec::new();
            for &algo in &cfg.algorithms {
                for &rank in &cfg.ranks {
                    out.push(evaluate(cfg, &data, &index, &head, &bins, i, pr.unwrap_or(0.0), algo, rank)?);
                }
            }
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            log::info!("dataset {n}/{} done (index {i}, pr {pr:?})", jobs.len());
            Ok(out)
        })
        .collect();

    let by_job: std::collections::HashMap<(Option<u64>, usize), Result<Vec<BenchmarkRecord>>> = jobs
        .iter()
        .zip(outcomes)
        .map(|(&(pr, i), o)| ((pr.map(f64::to_bits), i), o))
        .collect();
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for &pr in &cfg.pr_values {
        for i in 0..cfg.n_datasets {
            let key = (labels[i].then_some(pr.to_bits()), i);
            match &by_job[&key] {
                Ok(r) => records.extend(r.iter().cloned().map(|mut rec| {
                    rec.pr = pr;
                    rec
                })),
                Err(e) => {
                    log::warn!("dataset {i} at pr {pr} failed: {e}");
                    failed.push((pr, i));
                }
            }
        }
    }
    let slots = cfg.pr_values.len() * cfg.n_datasets;
    if failed.len() as f64 > MAX_FAILURE_FRACTION * slots as f64 {
        return Err(Error::GenerationFailure(format!("{} of {slots} datasets failed; sweep aborted", failed.len())));
    }

    let mut points = Vec::new();
    for &algo in &cfg.algorithms {
        for &rank in &cfg.ranks {
            for &pr in &cfg.pr_values {
                let sel: Vec<&BenchmarkRecord> =
                    records.iter().filter(|r| r.algo == algo && r.rank == rank && r.pr == pr).collect();
                let pairs: Vec<(f64, bool)> = sel.iter().map(|r| (r.best_coupling, r.has_coupling)).collect();
                let conn = conn_score(&pairs)?;
                points.push(SweepPoint {
                    algo,
                    rank,
                    pr,
                    n_records: sel.len(),
                    mean_ev: mean(sel.iter().map(|r| r.ev)),
                    conn: conn.score,
                    conn_threshold: conn.threshold,
                    loc: mean(sel.iter().filter_map(|r| r.loc)),
                    mean_coupling_coupled: mean(sel.iter().filter(|r| r.has_coupling).map(|r| r.best_coupling)),
                    mean_coupling_uncoupled: mean(sel.iter().filter(|r| !r.has_coupling).map(|r| r.best_coupling)),
                });
            }
        }
    }
    Ok(SweepResult { points, records, failed_datasets: failed })
}

/// Outcome of the scalp-map geometry check on one coupled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryOutcome {
    pub seed: u64,
    pub strongest: [usize; 2],
    pub true_octants: [Octant; 2],
    pub hit: bool,
}

/// Fits coupled datasets at one PR and checks whether the two strongest
/// electrodes of the best pair's scalp map both lie in an octant holding one
/// of the two true sources.
pub fn geometry_check(cfg: &SweepConfig, pr: f64, rank: usize, n: usize) -> Result<Vec<GeometryOutcome>> {
    let head = cfg.head_model()?;
    let bins = cfg.band_bins()?;
    let band = (cfg.band_hz[0], cfg.band_hz[1]);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.base_seed.wrapping_add(i as u64);
            let data = make_dataset(cfg, &head, pr, true, seed)?;
            let mut opts = cfg.multi_init.clone();
            opts.fit.seed = derive_seed(seed, rank as u64);
            let (model, _, _) = fit_dataset(&data.tensor, Algorithm::Parafac2, rank, &bins, &opts)?;
            let (a, b, _) = best_pair(&model, &bins)?.ok_or_else(|| Error::invalid("rank must be at least 2"))?;
            let map: ConnectivityMap = scalp_map(&model, a, b, &bins, band)?;
            let top = map.strongest(2);
            let lf = data.scene.coupled.as_ref().expect("coupled scene").leadfields;
            let true_octants = [head.sources[lf[0]].octant, head.sources[lf[1]].octant];
            let hit = top.iter().all(|&e| true_octants.iter().any(|o| o.contains(&head.electrodes[e])));
            Ok(GeometryOutcome { seed, strongest: [top[0], top[1]], true_octants, hit })
        })
        .collect()
}
