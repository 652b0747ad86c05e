use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use super::population::{total_rates, FounderRef, Individual, PopulationState};
use super::EngineError;
use crate::model::{validate_sweep_regime, Allele, EcoParams, Geometry};
use crate::seed::{dynamics_rng, replicate_seed};

/// Default diagnostic ε for phase boundaries and upcrossing counts.
pub const DEFAULT_EPS: f64 = 0.1;

/// One applied event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Birth {
        mother: Individual,
        father: Individual,
        recombined: (bool, bool),
        child: Individual,
    },
    Death {
        victim: Individual,
    },
}

/// Picks the parent each neutral allele of a newborn is copied from.
/// Returns `(from_father_at_n1, from_father_at_n2)`.
///
/// In the adjacent geometry a crossover between `N1` and `N2` switches the
/// source away from whichever parent supplied `N1`. In the separated geometry
/// each neutral locus recombines with the selected locus independently.
#[inline]
pub fn label_sources(geometry: Geometry, rec1: bool, rec2: bool) -> (bool, bool) {
    match geometry {
        Geometry::Adjacent => (rec1, rec1 ^ rec2),
        Geometry::Separated => (rec1, rec2),
    }
}

/// Labels of a newborn of `mother` and `father` given the recombination flags.
pub fn inherit_labels(
    geometry: Geometry,
    mother: &Individual,
    father: &Individual,
    rec1: bool,
    rec2: bool,
) -> (FounderRef, FounderRef) {
    let (f1, f2) = label_sources(geometry, rec1, rec2);
    (
        if f1 { father.label1 } else { mother.label1 },
        if f2 { father.label2 } else { mother.label2 },
    )
}

#[inline]
fn flip<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    p > 0.0 && rng.random::<f64>() < p
}

/// Advances `state` by one event of the agent-based process.
///
/// Returns `None` when the population is empty.
pub fn step<R: Rng + ?Sized>(
    state: &mut PopulationState,
    params: &EcoParams,
    rng: &mut R,
) -> Option<Event> {
    let rates = total_rates(state, params);
    let total = rates.total();
    if !(total > 0.0) {
        return None;
    }
    let wait: f64 = rng.sample(Exp1);
    state.t += wait / total;

    let mut u = rng.random::<f64>() * total;
    let mut pick = |r: f64| {
        if u < r {
            true
        } else {
            u -= r;
            false
        }
    };
    let (is_birth, alpha) = if pick(rates.birth[0]) {
        (true, Allele::Resident)
    } else if pick(rates.birth[1]) {
        (true, Allele::Mutant)
    } else if pick(rates.death[0]) {
        (false, Allele::Resident)
    } else if state.n_mutant() > 0 {
        (false, Allele::Mutant)
    } else {
        // rounding fell through the last bucket
        (false, Allele::Resident)
    };

    if !is_birth {
        let slot = state.uniform_slot(alpha, rng);
        let victim = state.swap_remove(alpha, slot);
        return Some(Event::Death { victim });
    }

    let mother = *state.get(alpha, state.uniform_slot(alpha, rng));
    let male_weight = [
        params.f(Allele::Resident) * state.n_resident() as f64,
        params.f(Allele::Mutant) * state.n_mutant() as f64,
    ];
    let father_trait = if rng.random::<f64>() * (male_weight[0] + male_weight[1]) < male_weight[0] {
        Allele::Resident
    } else {
        Allele::Mutant
    };
    let father = *state.get(father_trait, state.uniform_slot(father_trait, rng));
    let rec1 = flip(rng, params.r1);
    let rec2 = flip(rng, params.r2);
    let (label1, label2) = inherit_labels(params.geometry, &mother, &father, rec1, rec2);
    let id = state.push(alpha, label1, label2);
    let child = Individual {
        id,
        alpha,
        label1,
        label2,
    };
    Some(Event::Birth {
        mother,
        father,
        recombined: (rec1, rec2),
        child,
    })
}

/// Counts `k -> k+1` transitions of the mutant count until it first
/// reaches `target`.
#[derive(Debug, Clone)]
pub(crate) struct UpcrossTracker {
    target: usize,
    counts: Vec<u64>,
    done: bool,
}

impl UpcrossTracker {
    pub(crate) fn new(target: usize, initial_mutants: usize) -> Self {
        UpcrossTracker {
            target,
            counts: vec![0; target],
            done: initial_mutants >= target,
        }
    }

    #[inline]
    pub(crate) fn observe(&mut self, before: usize, after: usize) {
        if self.done {
            return;
        }
        if after == before + 1 {
            self.counts[before] += 1;
        }
        if after >= self.target {
            self.done = true;
        }
    }

    pub(crate) fn reached(&self) -> bool {
        self.done
    }

    pub(crate) fn report(&self, levels: &[u64]) -> BTreeMap<u64, u64> {
        levels
            .iter()
            .map(|&k| (k, self.counts.get(k as usize).copied().unwrap_or(0)))
            .collect()
    }
}

pub fn eps_level(params: &EcoParams, eps: f64) -> usize {
    (eps * params.capacity as f64).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub n_resident: usize,
    pub n_mutant: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Abort after this many events; `None` uses [`default_event_cap`].
    pub event_cap: Option<u64>,
    /// Record `(t, n_A, n_a)` every `stride` events.
    pub trajectory_stride: Option<u64>,
    /// Levels whose first-phase upcrossings are counted.
    pub upcross_levels: Option<Vec<u64>>,
    /// Diagnostic ε for phase boundaries and upcrossings.
    pub eps: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            event_cap: None,
            trajectory_stride: None,
            upcross_levels: None,
            eps: DEFAULT_EPS,
        }
    }
}

/// `500 K (1 + ln K)` events.
pub fn default_event_cap(params: &EcoParams) -> u64 {
    let k = params.capacity as f64;
    (500.0 * k * (1.0 + k.ln())).ceil() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub seed: u64,
    /// The resident went extinct while mutants survived.
    pub fixed: bool,
    /// Extinction time of the losing allele.
    pub t_ext: f64,
    pub event_count: u64,
    /// Population at `t_ext`, kept only on fixation.
    pub final_pop: Option<PopulationState>,
    pub upcross_counts: Option<BTreeMap<u64, u64>>,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
    /// First time the mutant count reached `floor(eps K)`.
    pub t_mutant_eps: Option<f64>,
    /// First time after `t_mutant_eps` the resident count fell to `floor(eps K)`.
    pub t_resident_eps: Option<f64>,
}

/// Simulates one sweep attempt from a single mutant until one allele is lost.
pub fn run_sweep(params: &EcoParams, seed: u64, opts: &SimOptions) -> Result<SweepOutcome, EngineError> {
    let derived = validate_sweep_regime(params).into_result()?;
    let mut rng = dynamics_rng(seed);
    let mut state = PopulationState::initial(params, &derived);
    let cap = opts.event_cap.unwrap_or_else(|| default_event_cap(params));
    let level = eps_level(params, opts.eps);
    let mut tracker = opts
        .upcross_levels
        .as_ref()
        .map(|_| UpcrossTracker::new(level, state.n_mutant()));
    let mut trajectory = opts.trajectory_stride.map(|_| {
        vec![TrajectoryPoint {
            t: 0.0,
            n_resident: state.n_resident(),
            n_mutant: state.n_mutant(),
        }]
    });
    let stride = opts.trajectory_stride.unwrap_or(u64::MAX).max(1);
    let mut t_mutant_eps = (state.n_mutant() >= level).then_some(0.0);
    let mut t_resident_eps = None;
    let mut events: u64 = 0;

    while state.n_resident() > 0 && state.n_mutant() > 0 {
        if events >= cap {
            return Err(EngineError::EventCapExceeded {
                seed,
                events,
                t: state.t,
            });
        }
        let before = state.n_mutant();
        step(&mut state, params, &mut rng);
        events += 1;
        let after = state.n_mutant();
        if let Some(tr) = tracker.as_mut() {
            tr.observe(before, after);
        }
        if t_mutant_eps.is_none() {
            if after >= level {
                t_mutant_eps = Some(state.t);
            }
        } else if t_resident_eps.is_none() && state.n_resident() <= level {
            t_resident_eps = Some(state.t);
        }
        if let Some(tr) = trajectory.as_mut() {
            if events.is_multiple_of(stride) {
                tr.push(TrajectoryPoint {
                    t: state.t,
                    n_resident: state.n_resident(),
                    n_mutant: state.n_mutant(),
                });
            }
        }
    }
    if let Some(tr) = trajectory.as_mut() {
        if !events.is_multiple_of(stride) {
            tr.push(TrajectoryPoint {
                t: state.t,
                n_resident: state.n_resident(),
                n_mutant: state.n_mutant(),
            });
        }
    }
    let fixed = state.n_resident() == 0 && state.n_mutant() > 0;
    Ok(SweepOutcome {
        seed,
        fixed,
        t_ext: state.t,
        event_count: events,
        upcross_counts: match (&tracker, &opts.upcross_levels) {
            (Some(tr), Some(levels)) => Some(tr.report(levels)),
            _ => None,
        },
        final_pop: fixed.then_some(state),
        trajectory,
        t_mutant_eps,
        t_resident_eps,
    })
}

/// Upcrossing counts from one first phase that reached `floor(eps K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpcrossingSample {
    pub counts: BTreeMap<u64, u64>,
    /// First-phase runs needed, including those where the mutant died out.
    pub attempts: u64,
}

/// Maximum number of discarded first phases before giving up.
pub const UPCROSS_ATTEMPT_CAP: u64 = 100_000;

/// Counts, for each `k` in `levels`, the transitions of the mutant count
/// from `k` to `k + 1` strictly before it first hits `floor(eps K)`. Runs
/// where the mutant dies first are discarded and redrawn from seeds derived
/// from `seed`.
pub fn count_upcrossings(
    params: &EcoParams,
    levels: &[u64],
    eps: f64,
    seed: u64,
) -> Result<UpcrossingSample, EngineError> {
    let derived = validate_sweep_regime(params).into_result()?;
    let level = eps_level(params, eps);
    let cap = default_event_cap(params);
    for attempt in 0..UPCROSS_ATTEMPT_CAP {
        let run_seed = replicate_seed(seed, attempt);
        let mut rng = dynamics_rng(run_seed);
        let mut state = PopulationState::initial(params, &derived);
        let mut tracker = UpcrossTracker::new(level, state.n_mutant());
        let mut events = 0u64;
        while !tracker.reached() && state.n_mutant() > 0 && state.n_resident() > 0 {
            if events >= cap {
                return Err(EngineError::EventCapExceeded {
                    seed: run_seed,
                    events,
                    t: state.t,
                });
            }
            let before = state.n_mutant();
            step(&mut state, params, &mut rng);
            events += 1;
            tracker.observe(before, state.n_mutant());
        }
        if state.n_mutant() > 0 {
            return Ok(UpcrossingSample {
                counts: tracker.report(levels),
                attempts: attempt + 1,
            });
        }
    }
    Err(EngineError::AttemptCapExceeded {
        attempts: UPCROSS_ATTEMPT_CAP,
        collected: 0,
        requested: 1,
    })
}
