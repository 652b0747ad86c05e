//! Experiment configuration: a flat `key = value` text file.
//!
//! ```text
//! # reference sweep
//! f_A = 2
//! f_a = 3
//! D_A = 0.5
//! D_a = 0.5
//! C_AA = 1
//! C_Aa = 1
//! C_aA = 1
//! C_aa = 1
//! K = 1000
//! r1_logK = 0.2
//! r2_logK = 0.3
//! geometry = adjacent
//! mode = compare
//! ```
//!
//! Blank lines and `#` comments are ignored. Keys are case-sensitive.
//! `r1_logK`/`r2_logK` give `r_j ln K` and are converted by dividing by
//! `ln K`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::engine::DEFAULT_EPS;
use crate::model::{EcoParams, Geometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Analytic,
    Compare,
    Diagnostics,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "analytic" => Ok(Mode::Analytic),
            "compare" => Ok(Mode::Compare),
            "diagnostics" => Ok(Mode::Diagnostics),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simulate => "simulate",
            Mode::Analytic => "analytic",
            Mode::Compare => "compare",
            Mode::Diagnostics => "diagnostics",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: EcoParams,
    /// Sample size at the end of each fixed sweep.
    pub d: u32,
    pub n_fixed: Option<u64>,
    pub master_seed: u64,
    pub eps_diag: f64,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub max_attempts: Option<u64>,
    /// Trajectory of the first fixed replicate.
    pub out_trajectory: Option<PathBuf>,
    pub trajectory_stride: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: `{key}` expects {expected}, got `{value}`")]
    TypeMismatch {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("conflicting keys `{a}` (line {line_a}) and `{b}` (line {line_b})")]
    ConflictingKeys {
        a: String,
        line_a: usize,
        b: String,
        line_b: usize,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

const KEYS: &[&str] = &[
    "f_A",
    "f_a",
    "D_A",
    "D_a",
    "C_AA",
    "C_Aa",
    "C_aA",
    "C_aa",
    "K",
    "r1",
    "r1_logK",
    "r2",
    "r2_logK",
    "geometry",
    "d",
    "n_fixed",
    "master_seed",
    "eps_diag",
    "out_csv",
    "out_json",
    "mode",
    "max_attempts",
    "out_trajectory",
    "trajectory_stride",
];

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.0.get(key)
    }

    fn parse<T: FromStr>(&self, key: &str, expected: &'static str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, value)) => value.parse().map(Some).map_err(|_| ConfigError::TypeMismatch {
                line: *line,
                key: key.to_string(),
                expected,
                value: value.clone(),
            }),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.parse(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(ConfigError::TypeMismatch {
                line: self.raw(key).unwrap().0,
                key: key.to_string(),
                expected: "a finite number",
                value: self.raw(key).unwrap().1.clone(),
            }),
            v => Ok(v),
        }
    }

    fn required(&self, key: &str) -> Result<f64, ConfigError> {
        self.number(key)?.ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    fn recombination(&self, plain: &str, scaled: &str, ln_k: f64) -> Result<f64, ConfigError> {
        match (self.raw(plain), self.raw(scaled)) {
            (Some((la, _)), Some((lb, _))) => Err(ConfigError::ConflictingKeys {
                a: plain.to_string(),
                line_a: *la,
                b: scaled.to_string(),
                line_b: *lb,
            }),
            (Some(_), None) => self.required(plain),
            (None, Some((line, _))) => {
                if ln_k <= 0.0 {
                    return Err(ConfigError::Invalid(format!(
                        "line {line}: `{scaled}` needs K >= 2"
                    )));
                }
                Ok(self.required(scaled)? / ln_k)
            }
            (None, None) => Err(ConfigError::MissingKey(format!("{plain} (or {scaled})"))),
        }
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries = BTreeMap::new();
    for (ix, raw) in text.lines().enumerate() {
        let line = ix + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let key = key.trim();
        let value = unquote(value.trim()).to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if entries.insert(key.to_string(), (line, value)).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
    }
    let e = Entries(entries);

    let capacity: u64 = e
        .parse("K", "a positive integer")?
        .ok_or_else(|| ConfigError::MissingKey("K".into()))?;
    if capacity == 0 {
        let (line, value) = e.raw("K").unwrap().clone();
        return Err(ConfigError::TypeMismatch {
            line,
            key: "K".into(),
            expected: "a positive integer",
            value,
        });
    }
    let ln_k = (capacity as f64).ln();
    let geometry = match e.raw("geometry") {
        None => Geometry::Adjacent,
        Some((line, v)) => match v.as_str() {
            "adjacent" => Geometry::Adjacent,
            "separated" => Geometry::Separated,
            _ => {
                return Err(ConfigError::TypeMismatch {
                    line: *line,
                    key: "geometry".into(),
                    expected: "`adjacent` or `separated`",
                    value: v.clone(),
                })
            }
        },
    };
    let params = EcoParams {
        fertility: [e.required("f_A")?, e.required("f_a")?],
        death: [e.required("D_A")?, e.required("D_a")?],
        competition: [
            [e.required("C_AA")?, e.required("C_Aa")?],
            [e.required("C_aA")?, e.required("C_aa")?],
        ],
        capacity,
        r1: e.recombination("r1", "r1_logK", ln_k)?,
        r2: e.recombination("r2", "r2_logK", ln_k)?,
        geometry,
    };
    params
        .check()
        .map_err(|err| ConfigError::Invalid(err.to_string()))?;

    let d: u32 = e.parse("d", "a positive integer")?.unwrap_or(1);
    if d == 0 {
        return Err(ConfigError::Invalid("d must be at least 1".into()));
    }
    let eps_diag = e.number("eps_diag")?.unwrap_or(DEFAULT_EPS);
    if !(eps_diag > 0.0 && eps_diag < 1.0) {
        return Err(ConfigError::Invalid("eps_diag must lie in (0, 1)".into()));
    }
    let mode = match e.raw("mode") {
        None => None,
        Some((line, v)) => Some(v.parse().map_err(|_| ConfigError::TypeMismatch {
            line: *line,
            key: "mode".into(),
            expected: "one of simulate, analytic, compare, diagnostics",
            value: v.clone(),
        })?),
    };
    let path = |key: &str| e.raw(key).map(|(_, v)| PathBuf::from(v));
    let trajectory_stride: u64 = e.parse("trajectory_stride", "a positive integer")?.unwrap_or(100);
    if trajectory_stride == 0 {
        return Err(ConfigError::Invalid("trajectory_stride must be at least 1".into()));
    }
    Ok(ExperimentConfig {
        params,
        d,
        n_fixed: e.parse("n_fixed", "a non-negative integer")?,
        master_seed: e.parse("master_seed", "an unsigned integer")?.unwrap_or(0),
        eps_diag,
        out_csv: path("out_csv"),
        out_json: path("out_json"),
        mode,
        max_attempts: e.parse("max_attempts", "a positive integer")?,
        out_trajectory: path("out_trajectory"),
        trajectory_stride,
    })
}

impl ExperimentConfig {
    /// Mode-specific requirements.
    pub fn check_for(&self, mode: Mode) -> Result<(), ConfigError> {
        if matches!(mode, Mode::Simulate | Mode::Compare) {
            match self.n_fixed {
                None => return Err(ConfigError::MissingKey("n_fixed".into())),
                Some(0) => return Err(ConfigError::Invalid("n_fixed must be at least 1".into())),
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Resolved values, for echoing into summaries.
    pub fn echo(&self) -> serde_json::Value {
        let p = &self.params;
        let ln_k = p.ln_k();
        serde_json::json!({
            "f_A": p.fertility[0],
            "f_a": p.fertility[1],
            "D_A": p.death[0],
            "D_a": p.death[1],
            "C_AA": p.competition[0][0],
            "C_Aa": p.competition[0][1],
            "C_aA": p.competition[1][0],
            "C_aa": p.competition[1][1],
            "K": p.capacity,
            "r1": p.r1,
            "r2": p.r2,
            "r1_logK": p.r1 * ln_k,
            "r2_logK": p.r2 * ln_k,
            "geometry": p.geometry,
            "d": self.d,
            "n_fixed": self.n_fixed,
            "master_seed": self.master_seed,
            "eps_diag": self.eps_diag,
            "mode": self.mode,
            "max_attempts": self.max_attempts,
        })
    }
}
