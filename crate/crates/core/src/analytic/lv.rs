//! Deterministic competitive Lotka-Volterra dynamics
//! `n_x' = (f_x - D_x - C_xA n_A - C_xa n_a) n_x`, integrated with the
//! Dormand-Prince 5(4) embedded pair.

use serde::Serialize;

use super::AnalyticError;
use crate::model::{derive, Allele, EcoParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LvState {
    pub n_resident: f64,
    pub n_mutant: f64,
}

impl LvState {
    pub fn new(n_resident: f64, n_mutant: f64) -> Self {
        LvState {
            n_resident,
            n_mutant,
        }
    }

    fn to_array(self) -> [f64; 2] {
        [self.n_resident, self.n_mutant]
    }

    fn from_array(y: [f64; 2]) -> Self {
        LvState::new(y[0], y[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            atol: 1e-9,
            rtol: 1e-9,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: 1.0,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LvTrajectory {
    /// Accepted step endpoints, starting with `(0, z)`.
    pub points: Vec<(f64, LvState)>,
    /// Steps after which a component fell below `-atol` and was reset to 0.
    pub clamped: usize,
}

impl LvTrajectory {
    pub fn last(&self) -> LvState {
        self.points.last().expect("trajectory is never empty").1
    }
}

#[inline]
fn field(growth: [f64; 2], c: &[[f64; 2]; 2], y: [f64; 2]) -> [f64; 2] {
    [
        (growth[0] - c[0][0] * y[0] - c[0][1] * y[1]) * y[0],
        (growth[1] - c[1][0] * y[0] - c[1][1] * y[1]) * y[1],
    ]
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Order of the propagated solution.
pub const NOMINAL_ORDER: f64 = 5.0;

struct LvField {
    growth: [f64; 2],
    c: [[f64; 2]; 2],
}

impl LvField {
    fn new(params: &EcoParams) -> Self {
        LvField {
            growth: Allele::BOTH.map(|x| params.f(x) - params.d(x)),
            c: params.competition,
        }
    }

    #[inline]
    fn eval(&self, y: [f64; 2]) -> [f64; 2] {
        field(self.growth, &self.c, y)
    }

    /// One Dormand-Prince step; returns the fifth-order solution and the
    /// local error estimate.
    fn dopri_step(&self, y: [f64; 2], h: f64) -> ([f64; 2], [f64; 2]) {
        let add = |terms: &[(f64, [f64; 2])]| {
            let mut out = y;
            for (w, k) in terms {
                out[0] += h * w * k[0];
                out[1] += h * w * k[1];
            }
            out
        };
        let k1 = self.eval(y);
        let k2 = self.eval(add(&[(A21, k1)]));
        let k3 = self.eval(add(&[(A31, k1), (A32, k2)]));
        let k4 = self.eval(add(&[(A41, k1), (A42, k2), (A43, k3)]));
        let k5 = self.eval(add(&[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]));
        let k6 = self.eval(add(&[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]));
        let y5 = add(&[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
        let k7 = self.eval(y5);
        let mut err = [0.0; 2];
        for i in 0..2 {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        (y5, err)
    }
}

/// Adaptive solver that can be advanced to arbitrary times.
struct Solver {
    field: LvField,
    ctrl: StepControl,
    t: f64,
    y: [f64; 2],
    h: f64,
    steps: usize,
    clamped: usize,
}

impl Solver {
    fn new(params: &EcoParams, z: LvState, t0: f64, ctrl: StepControl) -> Self {
        Solver {
            field: LvField::new(params),
            ctrl,
            t: t0,
            y: z.to_array(),
            h: ctrl.h_init,
            steps: 0,
            clamped: 0,
        }
    }

    /// Takes one accepted step not passing `t_end`.
    fn step_towards(&mut self, t_end: f64) -> Result<(), AnalyticError> {
        loop {
            if self.steps >= self.ctrl.max_steps {
                return Err(AnalyticError::StepFailure { t: self.t, h: self.h });
            }
            let remaining = t_end - self.t;
            let h = self.h.min(self.ctrl.h_max).min(remaining);
            let (y_new, e) = self.field.dopri_step(self.y, h);
            let mut norm = 0.0;
            for i in 0..2 {
                let scale = self.ctrl.atol + self.ctrl.rtol * self.y[i].abs().max(y_new[i].abs());
                norm += (e[i] / scale).powi(2);
            }
            let norm = (norm / 2.0).sqrt();
            self.steps += 1;
            let factor = if norm == 0.0 {
                5.0
            } else {
                (0.9 * norm.powf(-1.0 / 5.0)).clamp(0.2, 5.0)
            };
            if norm <= 1.0 && y_new.iter().all(|v| v.is_finite()) {
                self.t = if h == remaining { t_end } else { self.t + h };
                self.y = y_new;
                for v in self.y.iter_mut() {
                    if *v < 0.0 {
                        if *v < -self.ctrl.atol {
                            self.clamped += 1;
                        }
                        *v = 0.0;
                    }
                }
                // don't let a short final step shrink the next one
                if h == self.h.min(self.ctrl.h_max) || factor < 1.0 {
                    self.h = h * factor;
                }
                return Ok(());
            }
            self.h = h * factor.min(1.0);
            if self.h < self.ctrl.h_min {
                return Err(AnalyticError::StepFailure { t: self.t, h: self.h });
            }
        }
    }

    fn advance_to(&mut self, t_end: f64) -> Result<(), AnalyticError> {
        while self.t < t_end {
            self.step_towards(t_end)?;
        }
        Ok(())
    }

    fn state(&self) -> LvState {
        LvState::from_array(self.y)
    }
}

/// Integrates from `z` over `[0, t_end]`, recording every accepted step.
pub fn lv_flow(
    params: &EcoParams,
    z: LvState,
    t_end: f64,
    ctrl: &StepControl,
) -> Result<LvTrajectory, AnalyticError> {
    if !(z.n_resident >= 0.0 && z.n_mutant >= 0.0) || !(t_end >= 0.0) {
        return Err(AnalyticError::InvalidInitialState(z));
    }
    let mut solver = Solver::new(params, z, 0.0, *ctrl);
    let mut points = vec![(0.0, z)];
    while solver.t < t_end {
        solver.step_towards(t_end)?;
        points.push((solver.t, solver.state()));
    }
    Ok(LvTrajectory {
        points,
        clamped: solver.clamped,
    })
}

/// Fifth-order solution with `n_steps` equal steps and no error control.
pub fn lv_fixed_step(params: &EcoParams, z: LvState, t_end: f64, n_steps: usize) -> LvState {
    let field = LvField::new(params);
    let h = t_end / n_steps as f64;
    let mut y = z.to_array();
    for _ in 0..n_steps {
        y = field.dopri_step(y, h).0;
    }
    LvState::from_array(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TEpsOptions {
    /// Time the flow must stay in the target box to count as having entered.
    pub confirm: f64,
    /// Spacing of the membership checks.
    pub sample_dt: f64,
    /// Give up if no confirmed entry starts before this time.
    pub t_cap: f64,
    pub ctrl: StepControl,
}

impl Default for TEpsOptions {
    fn default() -> Self {
        TEpsOptions {
            confirm: 10.0,
            sample_dt: 0.01,
            t_cap: 1_000.0,
            ctrl: StepControl::default(),
        }
    }
}

/// Target box `[0, eps^2 / 2] x [nbar_a - eps / 2, nbar_a + eps / 2]`.
fn in_target(y: LvState, eps: f64, nbar_a: f64) -> bool {
    y.n_resident <= eps * eps / 2.0 && (y.n_mutant - nbar_a).abs() <= eps / 2.0
}

/// Time after which the flow started at `z` stays in the target box around
/// `(0, nbar_a)`, confirmed over `opts.confirm` time units.
pub fn t_eps_of_z(
    params: &EcoParams,
    z: LvState,
    eps: f64,
    opts: &TEpsOptions,
) -> Result<f64, AnalyticError> {
    if !(z.n_resident >= 0.0 && z.n_mutant > 0.0) {
        return Err(AnalyticError::InvalidInitialState(z));
    }
    let nbar_a = derive(params)?.nbar_of(Allele::Mutant);
    let mut solver = Solver::new(params, z, 0.0, opts.ctrl);
    let mut entry = in_target(z, eps, nbar_a).then_some(0.0);
    let mut prev = (0.0, z);
    let mut j = 0u64;
    loop {
        if let Some(t0) = entry {
            if solver.t - t0 >= opts.confirm {
                return Ok(t0);
            }
        } else if solver.t > opts.t_cap {
            return Err(AnalyticError::NotReached { t_cap: opts.t_cap });
        }
        j += 1;
        let t_next = j as f64 * opts.sample_dt;
        solver.advance_to(t_next)?;
        let y = solver.state();
        match (entry, in_target(y, eps, nbar_a)) {
            (None, true) => {
                entry = Some(refine_entry(params, prev, t_next, eps, nbar_a, &opts.ctrl)?);
            }
            (Some(_), false) => entry = None,
            _ => {}
        }
        prev = (t_next, y);
    }
}

/// Bisects the first time in `(from.0, t_in]` where the flow is in the box.
fn refine_entry(
    params: &EcoParams,
    from: (f64, LvState),
    t_in: f64,
    eps: f64,
    nbar_a: f64,
    ctrl: &StepControl,
) -> Result<f64, AnalyticError> {
    let (mut lo, mut hi) = (from.0, t_in);
    for _ in 0..60 {
        if hi - lo <= 1e-12 * (1.0 + hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let mut s = Solver::new(params, from.1, from.0, *ctrl);
        s.advance_to(mid)?;
        if in_target(s.state(), eps, nbar_a) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Largest entry time over a set of starting points. This is a grid
/// maximum, not the supremum over a continuum.
pub fn t_eps_grid_max(
    params: &EcoParams,
    zs: &[LvState],
    eps: f64,
    opts: &TEpsOptions,
) -> Result<f64, AnalyticError> {
    let mut worst = 0.0f64;
    for z in zs {
        worst = worst.max(t_eps_of_z(params, *z, eps, opts)?);
    }
    Ok(worst)
}
