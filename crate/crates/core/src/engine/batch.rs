use serde::Serialize;

use super::sweep::{count_upcrossings, run_sweep, SimOptions, SweepOutcome};
use super::EngineError;
use crate::model::EcoParams;
use crate::par::{map_indexed, Execution};
use crate::seed::replicate_seed;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOptions {
    pub sim: SimOptions,
    /// Total sweep attempts allowed; `None` means `100 n + 1000`.
    pub max_attempts: Option<u64>,
    pub execution: Execution,
}

impl BatchOptions {
    fn attempt_cap(&self, n_fixed: u64) -> u64 {
        self.max_attempts
            .unwrap_or_else(|| n_fixed.saturating_mul(100).saturating_add(1000))
    }
}

/// A fixed replicate and the attempt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate<T> {
    /// Position among the fixed outcomes, from 0.
    pub replicate: u64,
    /// Attempt index (from 0) of the run that fixed.
    pub attempt: u64,
    pub seed: u64,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedBatch<T> {
    pub items: Vec<Replicate<T>>,
    /// Sweep attempts consumed, fixed or not.
    pub attempts: u64,
    /// Set when the batch stopped early; `items` holds what was collected.
    pub error: Option<EngineError>,
}

impl<T> ConditionedBatch<T> {
    pub fn into_result(self) -> Result<Self, EngineError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    /// Fixed outcomes per attempt.
    pub fn fixation_frequency(&self) -> f64 {
        if self.attempts == 0 {
            return f64::NAN;
        }
        self.items.len() as f64 / self.attempts as f64
    }
}

/// Rejection sampler for runs conditioned on fixation.
///
/// Attempt `j` always runs with `replicate_seed(master_seed, j)` and the
/// first `n_fixed` fixing attempts in index order are kept, so the result
/// does not depend on the number of worker threads. `f` is applied to every
/// fixed outcome on the worker that produced it.
pub fn run_conditioned_map<T, F>(
    params: &EcoParams,
    n_fixed: u64,
    master_seed: u64,
    opts: &BatchOptions,
    f: F,
) -> ConditionedBatch<T>
where
    T: Send,
    F: Fn(SweepOutcome) -> T + Sync + Send,
{
    let cap = opts.attempt_cap(n_fixed);
    let mut batch = ConditionedBatch {
        items: Vec::with_capacity(n_fixed as usize),
        attempts: 0,
        error: None,
    };
    let mut next = 0u64;
    while (batch.items.len() as u64) < n_fixed {
        if next >= cap {
            batch.error = Some(EngineError::AttemptCapExceeded {
                attempts: next,
                collected: batch.items.len() as u64,
                requested: n_fixed,
            });
            break;
        }
        let needed = n_fixed - batch.items.len() as u64;
        let chunk = (needed * 4).clamp(16, 4096).min(cap - next);
        let results = map_indexed(opts.execution, next..next + chunk, |j| {
            let seed = replicate_seed(master_seed, j);
            run_sweep(params, seed, &opts.sim).map(|o| o.fixed.then(|| (seed, f(o))))
        });
        for (j, res) in (next..).zip(results) {
            batch.attempts = j + 1;
            match res {
                Err(e) => {
                    batch.error = Some(e);
                    return batch;
                }
                Ok(Some((seed, value))) => {
                    batch.items.push(Replicate {
                        replicate: batch.items.len() as u64,
                        attempt: j,
                        seed,
                        value,
                    });
                    if batch.items.len() as u64 == n_fixed {
                        return batch;
                    }
                }
                Ok(None) => {}
            }
        }
        next += chunk;
    }
    batch
}

/// Collects `n_fixed` complete fixed outcomes, final populations included.
pub fn run_conditioned(
    params: &EcoParams,
    n_fixed: u64,
    master_seed: u64,
    opts: &BatchOptions,
) -> Result<ConditionedBatch<SweepOutcome>, EngineError> {
    run_conditioned_map(params, n_fixed, master_seed, opts, |o| o).into_result()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixationEstimate {
    pub runs: u64,
    pub fixed: u64,
    pub frequency: f64,
    pub standard_error: f64,
}

/// Fraction of `n_runs` unconditioned sweeps that end in fixation.
pub fn fixation_frequency(
    params: &EcoParams,
    n_runs: u64,
    master_seed: u64,
    opts: &BatchOptions,
) -> Result<FixationEstimate, EngineError> {
    let results = map_indexed(opts.execution, 0..n_runs, |j| {
        run_sweep(params, replicate_seed(master_seed, j), &opts.sim).map(|o| o.fixed)
    });
    let mut fixed = 0u64;
    for r in results {
        fixed += r? as u64;
    }
    let frequency = fixed as f64 / n_runs as f64;
    Ok(FixationEstimate {
        runs: n_runs,
        fixed,
        frequency,
        standard_error: (frequency * (1.0 - frequency) / n_runs as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpcrossingMeans {
    pub levels: Vec<u64>,
    pub runs: u64,
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    /// First-phase attempts, including those where the mutant died out.
    pub attempts: u64,
}

/// Average first-phase upcrossing counts over `n_runs` conditioned runs.
pub fn mean_upcrossings(
    params: &EcoParams,
    levels: &[u64],
    eps: f64,
    n_runs: u64,
    master_seed: u64,
    execution: Execution,
) -> Result<UpcrossingMeans, EngineError> {
    let samples = map_indexed(execution, 0..n_runs, |j| {
        count_upcrossings(params, levels, eps, replicate_seed(master_seed, j))
    });
    let mut sum = vec![0.0; levels.len()];
    let mut sum_sq = vec![0.0; levels.len()];
    let mut attempts = 0;
    for s in samples {
        let s = s?;
        attempts += s.attempts;
        for (i, k) in levels.iter().enumerate() {
            let x = s.counts[k] as f64;
            sum[i] += x;
            sum_sq[i] += x * x;
        }
    }
    let n = n_runs as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let standard_error = mean
        .iter()
        .zip(&sum_sq)
        .map(|(m, sq)| ((sq / n - m * m).max(0.0) / (n - 1.0).max(1.0)).sqrt())
        .collect();
    Ok(UpcrossingMeans {
        levels: levels.to_vec(),
        runs: n_runs,
        mean,
        standard_error,
        attempts,
    })
}
