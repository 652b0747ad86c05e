//! Exact simulation of a selective sweep in a three-locus birth–death
//! population with competition and recombination, the limiting ancestral
//! sampling formula, and tools for comparing the two.
//!
//! ```
//! use sweepsim::analytic::predict;
//! use sweepsim::model::{EcoParams, Geometry};
//!
//! let ln_k = 1000f64.ln();
//! let params = EcoParams::reference(0.2 / ln_k, 0.3 / ln_k, Geometry::Adjacent);
//! let pred = predict(&params).unwrap();
//! assert!((pred.ps.sum() - 1.0).abs() < 1e-12);
//! ```

pub mod analytic;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod genealogy;
pub mod model;
pub mod oracles;
pub mod par;
pub mod seed;
