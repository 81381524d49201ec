//! Resumable ALS driver shared by both models. Stopping a run after `n`
//! sweeps and resuming it later is identical to one uninterrupted run, which
//! the multi-initialization protocol relies on.

use std::time::{Duration, Instant};

use super::{has_converged, FitReport};
use crate::error::{Error, Result};

pub(crate) trait Sweep {
    /// One full ALS cycle; returns the squared error afterwards.
    fn sweep(&mut self) -> f64;
    fn is_finite(&self) -> bool;
}

pub(crate) struct Als<S> {
    pub state: S,
    pub losses: Vec<f64>,
    pub converged: bool,
    data_norm2: f64,
    elapsed: Duration,
}

impl<S: Sweep> Als<S> {
    pub fn new(state: S, initial_loss: f64, data_norm2: f64) -> Self {
        Als { state, losses: vec![initial_loss], converged: data_norm2 == 0.0, data_norm2, elapsed: Duration::ZERO }
    }

    pub fn iterations(&self) -> usize {
        self.losses.len() - 1
    }

    pub fn loss(&self) -> f64 {
        *self.losses.last().expect("initial loss recorded")
    }

    /// Sweeps until convergence or until `max_iters` sweeps have been done
    /// in total.
    pub fn advance(&mut self, max_iters: usize, tol: f64) -> Result<()> {
        let start = Instant::now();
        while !self.converged && self.iterations() < max_iters {
            let prev = self.loss();
            let cur = self.state.sweep();
            let iteration = self.iterations() + 1;
            if !cur.is_finite() || !self.state.is_finite() {
                return Err(Error::NumericalFailure {
                    iteration,
                    message: "non-finite factor or loss".into(),
                });
            }
            self.losses.push(cur);
            self.converged = has_converged(prev, cur, self.data_norm2, tol);
        }
        self.elapsed += start.elapsed();
        Ok(())
    }

    pub fn report(&self, explained_variance: f64) -> FitReport {
        FitReport {
            losses: self.losses.clone(),
            iterations: self.iterations(),
            converged: self.converged,
            explained_variance,
            wall_time: self.elapsed,
        }
    }
}
