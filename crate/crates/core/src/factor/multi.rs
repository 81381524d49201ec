//! Multi-start protocol: several runs, each picking the best of a batch of
//! short random starts and refining it, with the final model chosen by the
//! coupling it exhibits rather than by its loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::als::{Als, Sweep};
use super::{parafac, parafac2, Algorithm, FactorModel, FitOptions, FitReport, SpatialStart, BURN_IN_ITERS};
use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiInitOptions {
    pub n_runs: usize,
    pub n_inits: usize,
    pub burn_in: usize,
    pub fit: FitOptions,
}

impl Default for MultiInitOptions {
    fn default() -> Self {
        MultiInitOptions { n_runs: 10, n_inits: 10, burn_in: BURN_IN_ITERS, fit: FitOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct MultiInitResult {
    pub model: FactorModel,
    pub report: FitReport,
    /// Selection score of every run; `None` where the run failed.
    pub couplings: Vec<Option<f64>>,
    pub selected_run: usize,
}

fn one_run<S: Sweep>(
    start: impl Fn(u64) -> Result<Als<S>>,
    finish: impl Fn(&Als<S>) -> Result<(FactorModel, FitReport)>,
    first_seed: u64,
    opts: &MultiInitOptions,
) -> Result<(FactorModel, FitReport)> {
    let burn = opts.burn_in.min(opts.fit.max_iters);
    let mut best: Option<Als<S>> = None;
    let mut last_err = None;
    for i in 0..opts.n_inits {
        let seed = first_seed.wrapping_add(i as u64);
        let attempt = start(seed).and_then(|mut als| als.advance(burn, opts.fit.tol).map(|_| als));
        match attempt {
            Ok(als) => {
                if best.as_ref().is_none_or(|b| als.loss() < b.loss()) {
                    best = Some(als);
                }
            }
            Err(e) => {
                log::warn!("initialization with seed {seed} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    let mut als = match best {
        Some(als) => als,
        None => return Err(last_err.unwrap_or_else(|| Error::invalid("n_inits must be positive"))),
    };
    als.advance(opts.fit.max_iters, opts.fit.tol)?;
    finish(&als)
}

/// Runs `n_runs × n_inits` fits and returns the run whose model scores the
/// highest under `coupling` (lowest run index on ties).
///
/// Initialization seeds are `seed, seed + 1, …` in run-major order, so
/// `n_runs = n_inits = 1` reproduces a single fit with `opts.fit.seed`.
pub fn multi_init_fit<F>(
    x: &ComplexTensor,
    rank: usize,
    algo: Algorithm,
    opts: &MultiInitOptions,
    coupling: F,
) -> Result<MultiInitResult>
where
    F: Fn(&FactorModel) -> f64 + Sync,
{
    if opts.n_runs == 0 || opts.n_inits == 0 {
        return Err(Error::invalid("n_runs and n_inits must be positive"));
    }
    super::check_rank(x.dims(), rank)?;
    let runs: Vec<Result<(FactorModel, FitReport, f64)>> = (0..opts.n_runs)
        .into_par_iter()
        .map(|run| {
            let first_seed = opts.fit.seed.wrapping_add((run * opts.n_inits) as u64);
            let (model, report) = match algo {
                Algorithm::Parafac => one_run(
                    |s| parafac::start(x, rank, s, SpatialStart::Svd),
                    |als| parafac::finish(x, als).map(|(m, r)| (m.into(), r)),
                    first_seed,
                    opts,
                ),
                Algorithm::Parafac2 => one_run(
                    |s| parafac2::start(x, rank, s, SpatialStart::Svd),
                    |als| parafac2::finish(x, als).map(|(m, r)| (m.into(), r)),
                    first_seed,
                    opts,
                ),
            }?;
            let score = coupling(&model);
            Ok((model, report, score))
        })
        .collect();

    let mut selected: Option<(usize, FactorModel, FitReport, f64)> = None;
    let mut couplings = Vec::with_capacity(runs.len());
    let mut first_err = None;
    for (run, outcome) in runs.into_iter().enumerate() {
        match outcome {
            Ok((model, report, score)) => {
                couplings.push(Some(score));
                let better = selected.as_ref().is_none_or(|s| score > s.3 || (s.3.is_nan() && !score.is_nan()));
                if better {
                    selected = Some((run, model, report, score));
                }
            }
            Err(e) => {
                log::warn!("run {run} failed and is skipped: {e}");
                couplings.push(None);
                first_err.get_or_insert(e);
            }
        }
    }
    match selected {
        Some((selected_run, model, report, _)) => Ok(MultiInitResult { model, report, couplings, selected_run }),
        None => Err(first_err.expect("at least one run was attempted")),
    }
}
