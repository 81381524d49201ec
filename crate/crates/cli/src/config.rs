//! The run configuration: one TOML document covering every pipeline stage.
//!
//! Every section and key is optional; missing values take the defaults of
//! the reference benchmark (108 channels, 100 Hz, three-minute recordings,
//! 500 noise sources, 1–40 Hz in 1 Hz steps, ten runs of ten starts).
//! Unknown keys are rejected.

use std::path::Path;

use phasefac::benchmark::SweepConfig;
use phasefac::factor::{Algorithm, FitOptions, MultiInitOptions};
use phasefac::synth::SceneConfig;
use phasefac::tensorize::TensorizeConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Power ratios accepted for generated and benchmarked datasets.
pub const PR_RANGE: (f64, f64) = (0.2, 0.9);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub head: HeadConfig,
    pub gen: GenConfig,
    pub scene: SceneConfig,
    pub tensorize: TensorizeConfig,
    pub fit: FitConfig,
    pub conn: ConnConfig,
    pub bench: BenchConfig,
}

/// Electrode cap and lead-field pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub channels: usize,
    pub n_leadfields: usize,
    pub seed: u64,
}

/// Single-dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub duration_s: f64,
    pub pr: f64,
    pub has_coupling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub algo: Algorithm,
    pub rank: usize,
    pub n_runs: usize,
    pub n_inits: usize,
    pub burn_in: usize,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConnConfig {
    pub band_hz: [f64; 2],
}

/// Benchmark grid. Scene, head, tensorization and fitting settings come
/// from the shared sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub pr_values: Vec<f64>,
    pub n_datasets: usize,
    pub duration_s: f64,
    pub algorithms: Vec<Algorithm>,
    pub ranks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            head: HeadConfig::default(),
            gen: GenConfig::default(),
            scene: SceneConfig::default(),
            tensorize: TensorizeConfig::default(),
            fit: FitConfig::default(),
            conn: ConnConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl Default for HeadConfig {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        HeadConfig { channels: sweep.channels, n_leadfields: sweep.n_leadfields, seed: sweep.head_seed }
    }
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { duration_s: 180.0, pr: 0.6, has_coupling: true }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        let mi = MultiInitOptions::default();
        FitConfig {
            algo: Algorithm::Parafac2,
            rank: 8,
            n_runs: mi.n_runs,
            n_inits: mi.n_inits,
            burn_in: mi.burn_in,
            max_iters: mi.fit.max_iters,
            tol: mi.fit.tol,
        }
    }
}

impl Default for ConnConfig {
    fn default() -> Self {
        ConnConfig { band_hz: [8.0, 12.0] }
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        BenchConfig {
            pr_values: sweep.pr_values,
            n_datasets: sweep.n_datasets,
            duration_s: sweep.duration_s,
            algorithms: sweep.algorithms,
            ranks: sweep.ranks,
        }
    }
}

fn in_pr_range(pr: f64) -> bool {
    (PR_RANGE.0..=PR_RANGE.1).contains(&pr)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml(&text).map_err(|e| match e {
                    CliError::Validation(m) => CliError::Validation(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must not exceed {}", i64::MAX));
        }
        if !in_pr_range(self.gen.pr) {
            return bad(format!("gen.pr = {} lies outside [{}, {}]", self.gen.pr, PR_RANGE.0, PR_RANGE.1));
        }
        if !(self.gen.duration_s > 0.0 && self.gen.duration_s.is_finite()) {
            return bad("gen.duration_s must be positive".into());
        }
        if !(self.scene.fs > 0.0 && self.scene.fs.is_finite()) {
            return bad("scene.fs must be positive".into());
        }
        if !(self.scene.sensor_noise_frac >= 0.0) {
            return bad("scene.sensor_noise_frac must be nonnegative".into());
        }
        let [lo, hi] = self.scene.band_hz;
        if !(lo > 0.0 && lo < hi && hi < self.scene.fs / 2.0) {
            return bad(format!("scene.band_hz [{lo}, {hi}] must be ordered and below Nyquist"));
        }
        let freqs = self.tensorize.frequencies(self.scene.fs)?;
        if self.fit.rank == 0 {
            return bad("fit.rank must be positive".into());
        }
        if self.fit.n_runs == 0 || self.fit.n_inits == 0 || self.fit.max_iters == 0 {
            return bad("fit.n_runs, fit.n_inits and fit.max_iters must be positive".into());
        }
        if !(self.fit.tol >= 0.0 && self.fit.tol.is_finite()) {
            return bad("fit.tol must be a nonnegative number".into());
        }
        check_band(self.conn.band_hz, &freqs)?;
        if self.bench.pr_values.iter().any(|&p| !in_pr_range(p)) {
            return bad(format!("bench.pr_values must lie in [{}, {}]", PR_RANGE.0, PR_RANGE.1));
        }
        self.sweep_config().validate()?;
        Ok(())
    }

    pub fn multi_init(&self) -> MultiInitOptions {
        MultiInitOptions {
            n_runs: self.fit.n_runs,
            n_inits: self.fit.n_inits,
            burn_in: self.fit.burn_in,
            fit: FitOptions { max_iters: self.fit.max_iters, tol: self.fit.tol, seed: self.seed, ..Default::default() },
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            pr_values: self.bench.pr_values.clone(),
            n_datasets: self.bench.n_datasets,
            duration_s: self.bench.duration_s,
            algorithms: self.bench.algorithms.clone(),
            ranks: self.bench.ranks.clone(),
            base_seed: self.seed,
            channels: self.head.channels,
            n_leadfields: self.head.n_leadfields,
            head_seed: self.head.seed,
            band_hz: self.conn.band_hz,
            scene: self.scene.clone(),
            tensorize: self.tensorize.clone(),
            multi_init: self.multi_init(),
        }
    }
}

/// Checks that `band` is ordered and lies within the frequency axis.
pub fn check_band(band: [f64; 2], freqs: &[f64]) -> CliResult<()> {
    let [lo, hi] = band;
    let (first, last) = match (freqs.first(), freqs.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(CliError::validation("empty frequency axis")),
    };
    if !(lo <= hi && lo >= first && hi <= last) {
        return Err(CliError::Validation(format!(
            "band {lo}:{hi} Hz must be ordered and lie within [{first}, {last}] Hz"
        )));
    }
    Ok(())
}

/// Parses `lo:hi` in Hz.
pub fn parse_band(s: &str) -> CliResult<[f64; 2]> {
    let err = || CliError::Validation(format!("band '{s}' must have the form lo:hi, e.g. 8:12"));
    let (lo, hi) = s.split_once(':').ok_or_else(err)?;
    let lo: f64 = lo.trim().parse().map_err(|_| err())?;
    let hi: f64 = hi.trim().parse().map_err(|_| err())?;
    Ok([lo, hi])
}
