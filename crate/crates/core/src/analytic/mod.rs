//! Closed-form limits: the sampling formula for the two neutral loci, the
//! fixation probability, and the deterministic Lotka-Volterra flow that
//! governs the middle phase of a sweep.

mod formula;
mod lv;

use thiserror::Error;

use crate::model::{ModelError, RegimeError};

pub use formula::{
    class_vectors, compute_ps, compute_qs, fixation_prob, predict, theorem1_pmf, theorem2_pmf,
    theorem2_weights, AnalyticPrediction, AnalyticPs, AnalyticQs, Q3_LIMIT_THRESHOLD,
};
pub use lv::{
    lv_fixed_step, lv_flow, t_eps_grid_max, t_eps_of_z, LvState, LvTrajectory, StepControl,
    TEpsOptions, NOMINAL_ORDER,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("class probability p{class} = {value} is negative; q inputs are inconsistent")]
    NegativeProbability { class: usize, value: f64 },
    #[error("class counts sum to {total}, expected sample size {d}")]
    CountMismatch { d: u32, total: u32 },
    #[error("step size controller failed at t = {t} (h = {h})")]
    StepFailure { t: f64, h: f64 },
    #[error("flow did not settle in the target box before t = {t_cap}")]
    NotReached { t_cap: f64 },
    #[error("invalid initial state {0:?}")]
    InvalidInitialState(lv::LvState),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
