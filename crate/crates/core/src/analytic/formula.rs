use serde::Serialize;

use super::AnalyticError;
use crate::genealogy::ClassCounts;
use crate::model::{validate_sweep_regime, Allele, DerivedEco, EcoParams, Geometry};

/// Escape-related probabilities of the limiting sampling formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticQs {
    pub q1: f64,
    pub q2: f64,
    pub qbar2: f64,
    pub q3: f64,
}

/// Limiting per-individual class probabilities in the adjacent geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticPs {
    pub p: [f64; 5],
}

impl AnalyticPs {
    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Relative width of the band around `r1 + r2 (1 - f_A/f_a) = 0` where `q3`
/// is evaluated by its limit.
pub const Q3_LIMIT_THRESHOLD: f64 = 1e-9;

/// `q1 = exp(-f_a r1 ln K / S_aA)`, `q2 = exp(-f_a r2 ln K / S_aA)`,
/// `qbar2 = exp(-f_a r2 ln K / |S_Aa|)` and
/// `q3 = r1 (q2^{f_A/f_a} - q1 q2) / (r1 + r2 (1 - f_A/f_a))`.
pub fn compute_qs(params: &EcoParams, derived: &DerivedEco) -> AnalyticQs {
    let ln_k = params.ln_k();
    let fa = params.f(Allele::Mutant);
    let ratio = params.f(Allele::Resident) / fa;
    let growth_time = fa * ln_k / derived.s_mutant;
    let (r1, r2) = (params.r1, params.r2);
    let q1 = (-r1 * growth_time).exp();
    let q2 = (-r2 * growth_time).exp();
    let qbar2 = (-fa * r2 * ln_k / derived.s_resident.abs()).exp();
    let q3 = q3_value(r1, r2, ratio, growth_time);
    AnalyticQs { q1, q2, qbar2, q3 }
}

/// `q3` written as `r1 a e^{-mu} (1 - e^{-h}) / h` with `mu = ratio r2 a` and
/// `h = a (r1 + r2 (1 - ratio))`, which equals the quotient form whenever
/// `h != 0` and tends to `r1 a e^{-mu}` as `h -> 0`.
pub(crate) fn q3_value(r1: f64, r2: f64, ratio: f64, growth_time: f64) -> f64 {
    if r1 == 0.0 {
        return 0.0;
    }
    let x = r1 + r2 * (1.0 - ratio);
    let lead = r1 * growth_time * (-ratio * r2 * growth_time).exp();
    if x.abs() < Q3_LIMIT_THRESHOLD * (r1 + r2) {
        return lead;
    }
    let h = growth_time * x;
    lead * (-(-h).exp_m1() / h)
}

/// The five class probabilities.
pub fn compute_ps(qs: &AnalyticQs) -> Result<AnalyticPs, AnalyticError> {
    let AnalyticQs { q1, q2, qbar2, q3 } = *qs;
    let p = [
        q1 * q2 * (1.0 - (1.0 - q1) * (1.0 - qbar2)),
        q1 * ((1.0 - q1 * q2) - q2 * qbar2 * (1.0 - q1)),
        q1 * q2 * (1.0 - qbar2) * (1.0 - q1),
        qbar2 * q3,
        (1.0 - q1) * (1.0 - q1 * q2 * (1.0 - qbar2)) - qbar2 * q3,
    ];
    if let Some((k, &value)) = p.iter().enumerate().find(|(_, &v)| v < -1e-12) {
        return Err(AnalyticError::NegativeProbability { class: k + 1, value });
    }
    Ok(AnalyticPs { p })
}

/// Class weights of the separated geometry:
/// `(q1 q2, q1 (1 - q2), (1 - q1) q2, 0, (1 - q1)(1 - q2))`.
pub fn theorem2_weights(qs: &AnalyticQs) -> [f64; 5] {
    let AnalyticQs { q1, q2, .. } = *qs;
    [q1 * q2, q1 * (1.0 - q2), (1.0 - q1) * q2, 0.0, (1.0 - q1) * (1.0 - q2)]
}

fn multinomial(weights: &[f64; 5], d: u32, m: &ClassCounts) -> Result<f64, AnalyticError> {
    if m.total() != d {
        return Err(AnalyticError::CountMismatch { d, total: m.total() });
    }
    // build d! / prod m_k! as a product of binomials
    let mut coeff = 1.0;
    let mut placed = 0u32;
    let mut power = 1.0;
    for (k, &mk) in m.m.iter().enumerate() {
        for j in 1..=mk {
            coeff *= (placed + j) as f64 / j as f64;
        }
        placed += mk;
        power *= weights[k].powi(mk as i32);
    }
    Ok(coeff * power)
}

/// Limiting probability of class counts `m` for a `d`-sample in the
/// adjacent geometry.
pub fn theorem1_pmf(ps: &AnalyticPs, d: u32, m: &ClassCounts) -> Result<f64, AnalyticError> {
    multinomial(&ps.p, d, m)
}

/// Limiting probability of class counts `m` in the separated geometry;
/// zero whenever `m4 > 0`.
pub fn theorem2_pmf(qs: &AnalyticQs, d: u32, m: &ClassCounts) -> Result<f64, AnalyticError> {
    let p = multinomial(&theorem2_weights(qs), d, m)?;
    Ok(if m.m[3] > 0 { 0.0 } else { p })
}

/// Limiting fixation probability `S_aA / f_a` of a single mutant.
pub fn fixation_prob(derived: &DerivedEco) -> f64 {
    derived.s
}

/// All vectors of five non-negative integers summing to `d`, in
/// lexicographic order.
pub fn class_vectors(d: u32) -> Vec<[u32; 5]> {
    let mut out = Vec::new();
    for a in 0..=d {
        for b in 0..=d - a {
            for c in 0..=d - a - b {
                for e in 0..=d - a - b - c {
                    out.push([a, b, c, e, d - a - b - c - e]);
                }
            }
        }
    }
    out
}

/// Everything the closed forms predict for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticPrediction {
    pub derived: DerivedEco,
    pub qs: AnalyticQs,
    pub ps: AnalyticPs,
    pub theorem2: [f64; 5],
}

impl AnalyticPrediction {
    /// Limiting per-individual class weights for the given geometry.
    pub fn class_weights(&self, geometry: Geometry) -> [f64; 5] {
        match geometry {
            Geometry::Adjacent => self.ps.p,
            Geometry::Separated => self.theorem2,
        }
    }

    pub fn pmf(&self, geometry: Geometry, d: u32, m: &ClassCounts) -> Result<f64, AnalyticError> {
        match geometry {
            Geometry::Adjacent => theorem1_pmf(&self.ps, d, m),
            Geometry::Separated => theorem2_pmf(&self.qs, d, m),
        }
    }

    /// Flat record: `q1, q2, qbar2, q3, p1..p5, s, sbar, nbar_A, nbar_a, S_aA, S_Aa`.
    pub fn to_json(&self) -> serde_json::Value {
        let d = &self.derived;
        serde_json::json!({
            "q1": self.qs.q1,
            "q2": self.qs.q2,
            "qbar2": self.qs.qbar2,
            "q3": self.qs.q3,
            "p1": self.ps.p[0],
            "p2": self.ps.p[1],
            "p3": self.ps.p[2],
            "p4": self.ps.p[3],
            "p5": self.ps.p[4],
            "s": d.s,
            "sbar": d.sbar,
            "nbar_A": d.nbar[0],
            "nbar_a": d.nbar[1],
            "S_aA": d.s_mutant,
            "S_Aa": d.s_resident,
        })
    }
}

pub fn predict(params: &EcoParams) -> Result<AnalyticPrediction, AnalyticError> {
    let derived = validate_sweep_regime(params).into_result()?;
    let qs = compute_qs(params, &derived);
    let ps = compute_ps(&qs)?;
    Ok(AnalyticPrediction {
        derived,
        qs,
        ps,
        theorem2: theorem2_weights(&qs),
    })
}
