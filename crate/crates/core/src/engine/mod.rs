//! Exact event-driven simulation of the birth-death process with
//! competition and recombination.
//!
//! Individuals carry their selected allele plus the founder labels of their
//! two neutral alleles, so the time-zero origin of every sampled neutral
//! allele is known at the end of a run without replaying events.

mod batch;
pub mod io;
mod population;
mod sweep;

use thiserror::Error;

use crate::model::RegimeError;

pub use batch::{
    fixation_frequency, mean_upcrossings, run_conditioned, run_conditioned_map, BatchOptions,
    ConditionedBatch, FixationEstimate, Replicate, UpcrossingMeans,
};
pub use population::{
    initial_resident_count, total_rates, FounderRef, Individual, PopulationState, TraitRates,
};
pub use sweep::{
    count_upcrossings, default_event_cap, eps_level, inherit_labels, label_sources, run_sweep,
    step, Event, SimOptions, SweepOutcome, TrajectoryPoint, UpcrossingSample, DEFAULT_EPS,
    UPCROSS_ATTEMPT_CAP,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error("run with seed {seed} exceeded the event cap ({events} events, t = {t})")]
    EventCapExceeded { seed: u64, events: u64, t: f64 },
    #[error("attempt cap of {attempts} reached with {collected} of {requested} outcomes collected")]
    AttemptCapExceeded {
        attempts: u64,
        collected: u64,
        requested: u64,
    },
}
