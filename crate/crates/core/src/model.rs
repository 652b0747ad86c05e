//! Ecological parameters of the three-locus model and the quantities derived
//! from them: equilibrium densities, invasion fitnesses and the rescaled
//! fitness that governs the fixation probability of a single mutant.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allele at the selected locus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Allele {
    /// The resident allele `A`.
    Resident = 0,
    /// The invading mutant allele `a`.
    Mutant = 1,
}

impl Allele {
    pub const BOTH: [Allele; 2] = [Allele::Resident, Allele::Mutant];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn other(self) -> Allele {
        match self {
            Allele::Resident => Allele::Mutant,
            Allele::Mutant => Allele::Resident,
        }
    }
}

impl fmt::Display for Allele {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Allele::Resident => f.write_str("A"),
            Allele::Mutant => f.write_str("a"),
        }
    }
}

/// Order of the three loci along the chromosome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// `SL - N1 - N2`: both neutral loci on the same side of the selected one.
    Adjacent,
    /// `N1 - SL - N2`: the selected locus sits between the neutral loci.
    Separated,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Adjacent => f.write_str("adjacent"),
            Geometry::Separated => f.write_str("separated"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} must be finite (got {value})")]
    NonFinite { name: &'static str, value: f64 },
    #[error("parameter {name} out of range: {reason} (got {value})")]
    OutOfRange {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },
    #[error("carrying capacity K must be at least 1")]
    ZeroCapacity,
    #[error("diagonal competition C_{allele}{allele} is zero; equilibrium density undefined")]
    ZeroSelfCompetition { allele: Allele },
}

/// Full model parameterization.
///
/// Arrays are indexed by [`Allele::index`]. `competition[x][y]` is the
/// per-capita impact an individual carrying `y` has on one carrying `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcoParams {
    pub fertility: [f64; 2],
    pub death: [f64; 2],
    pub competition: [[f64; 2]; 2],
    pub capacity: u64,
    pub r1: f64,
    pub r2: f64,
    pub geometry: Geometry,
}

impl EcoParams {
    /// Builds and structurally checks a parameter set.
    pub fn new(
        fertility: [f64; 2],
        death: [f64; 2],
        competition: [[f64; 2]; 2],
        capacity: u64,
        r1: f64,
        r2: f64,
        geometry: Geometry,
    ) -> Result<Self, ModelError> {
        let params = EcoParams {
            fertility,
            death,
            competition,
            capacity,
            r1,
            r2,
            geometry,
        };
        params.check()?;
        Ok(params)
    }

    /// Parameters of the illustrative sweep: `K = 1000`, `f = (2, 3)`,
    /// `D = 0.5` and all competition coefficients equal to one.
    pub fn reference(r1: f64, r2: f64, geometry: Geometry) -> Self {
        EcoParams {
            fertility: [2.0, 3.0],
            death: [0.5, 0.5],
            competition: [[1.0, 1.0], [1.0, 1.0]],
            capacity: 1000,
            r1,
            r2,
            geometry,
        }
    }

    /// Structural checks: finiteness, signs and probability ranges.
    /// Regime conditions are left to [`validate_sweep_regime`].
    pub fn check(&self) -> Result<(), ModelError> {
        let names = [
            ("f_A", self.fertility[0]),
            ("f_a", self.fertility[1]),
            ("D_A", self.death[0]),
            ("D_a", self.death[1]),
            ("C_AA", self.competition[0][0]),
            ("C_Aa", self.competition[0][1]),
            ("C_aA", self.competition[1][0]),
            ("C_aa", self.competition[1][1]),
            ("r1", self.r1),
            ("r2", self.r2),
        ];
        for (name, value) in names {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { name, value });
            }
        }
        for (name, value) in &names[..2] {
            if *value <= 0.0 {
                return Err(ModelError::OutOfRange {
                    name,
                    reason: "fertility must be positive",
                    value: *value,
                });
            }
        }
        for (name, value) in &names[2..8] {
            if *value < 0.0 {
                return Err(ModelError::OutOfRange {
                    name,
                    reason: "must be non-negative",
                    value: *value,
                });
            }
        }
        for (name, value) in &names[8..] {
            if !(0.0..=1.0).contains(value) {
                return Err(ModelError::OutOfRange {
                    name,
                    reason: "recombination probability must lie in [0, 1]",
                    value: *value,
                });
            }
        }
        if self.capacity == 0 {
            return Err(ModelError::ZeroCapacity);
        }
        Ok(())
    }

    #[inline]
    pub fn f(&self, allele: Allele) -> f64 {
        self.fertility[allele.index()]
    }

    #[inline]
    pub fn d(&self, allele: Allele) -> f64 {
        self.death[allele.index()]
    }

    /// Competition felt by `affected` from one individual of `affecting`.
    #[inline]
    pub fn c(&self, affected: Allele, affecting: Allele) -> f64 {
        self.competition[affected.index()][affecting.index()]
    }

    pub fn ln_k(&self) -> f64 {
        (self.capacity as f64).ln()
    }

    /// Returns a copy where every rate is multiplied by `lambda`.
    pub fn time_rescaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for x in out.fertility.iter_mut().chain(out.death.iter_mut()) {
            *x *= lambda;
        }
        for row in out.competition.iter_mut() {
            for x in row.iter_mut() {
                *x *= lambda;
            }
        }
        out
    }
}

/// Quantities derived in closed form from [`EcoParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedEco {
    /// Equilibrium densities `nbar_A`, `nbar_a`.
    pub nbar: [f64; 2],
    /// Invasion fitness `S_aA` of the mutant in the resident equilibrium.
    pub s_mutant: f64,
    /// Invasion fitness `S_Aa` of the resident in the mutant equilibrium.
    pub s_resident: f64,
    /// Rescaled invasion fitness `S_aA / f_a`.
    pub s: f64,
    /// `|S_Aa| / f_A`.
    pub sbar: f64,
}

impl DerivedEco {
    pub fn nbar_of(&self, allele: Allele) -> f64 {
        self.nbar[allele.index()]
    }
}

/// Equilibrium densities and invasion fitnesses.
pub fn derive(params: &EcoParams) -> Result<DerivedEco, ModelError> {
    params.check()?;
    for allele in Allele::BOTH {
        if params.c(allele, allele) == 0.0 {
            return Err(ModelError::ZeroSelfCompetition { allele });
        }
    }
    let nbar = Allele::BOTH.map(|x| (params.f(x) - params.d(x)) / params.c(x, x));
    let invasion = |x: Allele| {
        let y = x.other();
        params.f(x) - params.d(x) - params.c(x, y) * nbar[y.index()]
    };
    let s_mutant = invasion(Allele::Mutant);
    let s_resident = invasion(Allele::Resident);
    Ok(DerivedEco {
        nbar,
        s_mutant,
        s_resident,
        s: s_mutant / params.f(Allele::Mutant),
        sbar: s_resident.abs() / params.f(Allele::Resident),
    })
}

/// `r_j log K` above this value strains the weak-recombination regime.
pub const WEAK_RECOMBINATION_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RegimeViolation {
    Structural(String),
    DiagonalCompetition { allele: Allele, value: f64 },
    EquilibriumNotPositive { allele: Allele, value: f64 },
    MutantFitnessNotPositive { value: f64 },
    ResidentFitnessNotNegative { value: f64 },
}

impl fmt::Display for RegimeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegimeViolation::Structural(msg) => write!(f, "{msg}"),
            RegimeViolation::DiagonalCompetition { allele, value } => write!(
                f,
                "diagonal competition must be positive (C_{allele}{allele} = {value})"
            ),
            RegimeViolation::EquilibriumNotPositive { allele, value } => {
                write!(f, "nbar_{allele} must be positive (got {value})")
            }
            RegimeViolation::MutantFitnessNotPositive { value } => {
                write!(f, "S_aA must be positive (got {value})")
            }
            RegimeViolation::ResidentFitnessNotNegative { value } => {
                write!(f, "S_Aa must be negative (got {value})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Advisory {
    pub locus: u8,
    pub r_log_k: f64,
}

impl fmt::Display for Advisory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "r{} log K = {:.3} exceeds {}; weak-recombination asymptotics are strained",
            self.locus, self.r_log_k, WEAK_RECOMBINATION_LIMIT
        )
    }
}

/// Outcome of [`validate_sweep_regime`]. Advisories never make it fail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub violations: Vec<RegimeViolation>,
    pub advisories: Vec<Advisory>,
    pub r1_log_k: f64,
    pub r2_log_k: f64,
    pub derived: Option<DerivedEco>,
}

impl RegimeReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<DerivedEco, RegimeError> {
        match (self.violations.is_empty(), self.derived) {
            (true, Some(derived)) => Ok(derived),
            _ => Err(RegimeError {
                violations: self.violations,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parameters outside the sweep regime: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct RegimeError {
    pub violations: Vec<RegimeViolation>,
}

/// Checks that a single mutant can invade and replace the resident:
/// positive equilibria, `S_Aa < 0 < S_aA`.
pub fn validate_sweep_regime(params: &EcoParams) -> RegimeReport {
    let ln_k = params.ln_k();
    let mut report = RegimeReport {
        violations: Vec::new(),
        advisories: Vec::new(),
        r1_log_k: params.r1 * ln_k,
        r2_log_k: params.r2 * ln_k,
        derived: None,
    };
    if let Err(e) = params.check() {
        report.violations.push(RegimeViolation::Structural(e.to_string()));
        return report;
    }
    for (locus, r_log_k) in [(1, report.r1_log_k), (2, report.r2_log_k)] {
        if r_log_k > WEAK_RECOMBINATION_LIMIT {
            report.advisories.push(Advisory { locus, r_log_k });
        }
    }
    for allele in Allele::BOTH {
        let value = params.c(allele, allele);
        if value <= 0.0 {
            report
                .violations
                .push(RegimeViolation::DiagonalCompetition { allele, value });
        }
    }
    if !report.violations.is_empty() {
        return report;
    }
    let derived = derive(params).expect("structure and diagonal already checked");
    for allele in Allele::BOTH {
        let value = derived.nbar_of(allele);
        if value <= 0.0 {
            report
                .violations
                .push(RegimeViolation::EquilibriumNotPositive { allele, value });
        }
    }
    if derived.s_mutant <= 0.0 {
        report.violations.push(RegimeViolation::MutantFitnessNotPositive {
            value: derived.s_mutant,
        });
    }
    if derived.s_resident >= 0.0 {
        report.violations.push(RegimeViolation::ResidentFitnessNotNegative {
            value: derived.s_resident,
        });
    }
    report.derived = Some(derived);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn reference_parameters_derive() {
        let p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        let d = derive(&p).unwrap();
        assert_eq!(d.nbar, [1.5, 2.5]);
        assert_eq!(d.s_mutant, 1.0);
        assert_eq!(d.s_resident, -1.0);
        assert!(close(d.s, 1.0 / 3.0));
        assert_eq!(d.sbar, 0.5);
    }

    #[test]
    fn neutral_case_has_zero_fitness() {
        let p = EcoParams::new(
            [2.0, 2.0],
            [0.3, 0.3],
            [[0.7, 0.7], [0.7, 0.7]],
            100,
            0.0,
            0.0,
            Geometry::Adjacent,
        )
        .unwrap();
        let d = derive(&p).unwrap();
        assert!(d.s_mutant.abs() < 1e-15);
        assert!(d.s_resident.abs() < 1e-15);
    }

    #[test]
    fn zero_growth_gives_zero_equilibrium() {
        let mut p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        p.death[1] = p.fertility[1];
        assert_eq!(derive(&p).unwrap().nbar[1], 0.0);
    }

    #[test]
    fn derive_rejects_zero_diagonal() {
        let mut p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        p.competition[0][0] = 0.0;
        assert_eq!(
            derive(&p),
            Err(ModelError::ZeroSelfCompetition {
                allele: Allele::Resident
            })
        );
    }

    #[test]
    fn construction_rejects_non_finite_and_bad_ranges() {
        let base = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        let mut p = base.clone();
        p.fertility[0] = f64::NAN;
        assert!(matches!(p.check(), Err(ModelError::NonFinite { name: "f_A", .. })));
        let mut p = base.clone();
        p.death[1] = f64::INFINITY;
        assert!(matches!(p.check(), Err(ModelError::NonFinite { .. })));
        let mut p = base.clone();
        p.r2 = 1.5;
        assert!(matches!(p.check(), Err(ModelError::OutOfRange { name: "r2", .. })));
        let mut p = base.clone();
        p.competition[1][0] = -0.1;
        assert!(p.check().is_err());
        let mut p = base;
        p.capacity = 0;
        assert_eq!(p.check(), Err(ModelError::ZeroCapacity));
    }

    #[test]
    fn reference_regime_is_valid() {
        let report = validate_sweep_regime(&EcoParams::reference(0.0, 0.0, Geometry::Adjacent));
        assert!(report.is_ok(), "{:?}", report.violations);
        assert!(report.advisories.is_empty());
    }

    #[test]
    fn zero_mutant_fitness_is_reported() {
        // S_aA = f_a - D_a - C_aA nbar_A = 3 - 0.5 - 2.5 = 0
        let mut p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        p.competition[1][0] = 2.5 / 1.5;
        let report = validate_sweep_regime(&p);
        assert!(!report.is_ok());
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        assert!(msgs.iter().any(|m| m.starts_with("S_aA must be positive")), "{msgs:?}");
    }

    #[test]
    fn zero_diagonal_is_reported() {
        let mut p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        p.competition[1][1] = 0.0;
        let report = validate_sweep_regime(&p);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0]
            .to_string()
            .starts_with("diagonal competition must be positive"));
    }

    #[test]
    fn each_violation_is_listed() {
        let mut p = EcoParams::reference(0.0, 0.0, Geometry::Adjacent);
        // a cannot invade and A is untouched by a
        p.competition[0][1] = 0.0;
        p.competition[1][0] = 10.0;
        let report = validate_sweep_regime(&p);
        assert!(report.violations.len() >= 2, "{:?}", report.violations);
    }

    #[test]
    fn strong_recombination_is_advisory_only() {
        let p = EcoParams::reference(0.9, 0.1, Geometry::Adjacent);
        let report = validate_sweep_regime(&p);
        assert!(report.is_ok());
        assert_eq!(report.advisories.len(), 1);
        assert_eq!(report.advisories[0].locus, 1);
        assert!(close(report.r2_log_k, 0.1 * 1000f64.ln()));
    }

    proptest! {
        #[test]
        fn uniform_rate_rescaling(lambda in 0.01f64..100.0, fa in 1.0f64..5.0, da in 0.0f64..0.9, caa in 0.2f64..2.0) {
            let p = EcoParams::new([2.0, fa], [0.5, da], [[1.0, 0.8], [caa, 1.2]], 500, 0.01, 0.01, Geometry::Adjacent).unwrap();
            let a = derive(&p).unwrap();
            let b = derive(&p.time_rescaled(lambda)).unwrap();
            for i in 0..2 {
                prop_assert!((a.nbar[i] - b.nbar[i]).abs() <= 1e-12 * (1.0 + a.nbar[i].abs()));
            }
            prop_assert!((b.s_mutant - lambda * a.s_mutant).abs() <= 1e-9 * (1.0 + (lambda * a.s_mutant).abs()));
            prop_assert!((b.s_resident - lambda * a.s_resident).abs() <= 1e-9 * (1.0 + (lambda * a.s_resident).abs()));
            prop_assert!((a.s - b.s).abs() <= 1e-12);
            prop_assert!((a.sbar - b.sbar).abs() <= 1e-12);
        }

        #[test]
        fn valid_regime_bounds_s(fa in 0.5f64..6.0, da in 0.0f64..3.0, caa_cross in 0.0f64..2.0, caa in 0.1f64..2.0, cab in 0.5f64..3.0) {
            let p = EcoParams::new([2.0, fa], [0.5, da], [[1.0, cab], [caa_cross, caa]], 1000, 0.0, 0.0, Geometry::Adjacent).unwrap();
            let report = validate_sweep_regime(&p);
            if report.is_ok() {
                let d = report.derived.unwrap();
                prop_assert!(d.s > 0.0);
                if da + caa_cross * d.nbar[0] > 0.0 {
                    prop_assert!(d.s < 1.0);
                }
                prop_assert!(d.sbar > 0.0);
            }
        }
    }
}
