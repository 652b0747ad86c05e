//! Batches of conditioned replicates, their aggregation into empirical class
//! frequencies, and the comparison against the limiting sampling formula.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::analytic::{
    lv_flow, predict, t_eps_of_z, AnalyticError, AnalyticPrediction, LvState, StepControl,
    TEpsOptions,
};
use crate::config::{ConfigError, ExperimentConfig, Mode};
use crate::engine::io::write_trajectory_csv;
use crate::engine::{
    eps_level, mean_upcrossings, run_conditioned_map, run_sweep, BatchOptions, ConditionedBatch,
    EngineError, SimOptions,
};
use crate::genealogy::{classify, lineage_counts, sample_partition, ClassCounts, SampleError};
use crate::model::{validate_sweep_regime, Allele, EcoParams, Geometry, RegimeError};
use crate::oracles::{expected_upcrossings, moran_birth_count};
use crate::par::{current_threads, map_indexed, Execution};
use crate::seed::{replicate_seed, sampling_rng};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("replicate {replicate}: {source}")]
    Sample {
        replicate: u64,
        source: SampleError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Regime(_) => 3,
            ExperimentError::Analytic(AnalyticError::Regime(_)) => 3,
            ExperimentError::Engine(EngineError::Regime(_)) => 3,
            ExperimentError::Engine(_) => 4,
            _ => 1,
        }
    }
}

/// One row of the per-replicate CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub seed: u64,
    pub fixed: bool,
    pub t_ext: f64,
    pub event_count: u64,
    pub m1: u32,
    pub m2: u32,
    pub m3: u32,
    pub m4: u32,
    pub m5: u32,
    pub in_delta: bool,
    /// Per-individual classes read from each individual's own lineages; not
    /// part of the CSV.
    #[serde(skip)]
    pub lineage: [u32; 5],
}

impl ReplicateRecord {
    pub fn counts(&self) -> ClassCounts {
        ClassCounts {
            m: [self.m1, self.m2, self.m3, self.m4, self.m5],
            in_delta: self.in_delta,
        }
    }
}

struct Classified {
    t_ext: f64,
    event_count: u64,
    counts: Result<(ClassCounts, [u32; 5]), SampleError>,
}

/// Result of a batch of conditioned replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateBatch {
    pub records: Vec<ReplicateRecord>,
    pub attempts: u64,
    /// Why the batch stopped early, if it did.
    pub truncated: Option<EngineError>,
}

/// Runs `n_fixed` fixed sweeps, samples `d` individuals from each and
/// classifies their ancestry. Sampling uses a stream derived from the
/// replicate's seed, so records depend only on `(params, master_seed)`.
pub fn simulate_replicates(
    params: &EcoParams,
    d: u32,
    n_fixed: u64,
    master_seed: u64,
    opts: &BatchOptions,
) -> Result<ReplicateBatch, ExperimentError> {
    let batch: ConditionedBatch<Classified> =
        run_conditioned_map(params, n_fixed, master_seed, opts, |o| {
            let pop = o.final_pop.as_ref().expect("fixed outcome keeps its population");
            let mut rng = sampling_rng(o.seed);
            Classified {
                t_ext: o.t_ext,
                event_count: o.event_count,
                counts: sample_partition(pop, d as usize, &mut rng)
                    .map(|p| (classify(&p), lineage_counts(&p))),
            }
        });
    let mut records = Vec::with_capacity(batch.items.len());
    for item in batch.items {
        let (counts, lineage) = item.value.counts.map_err(|source| ExperimentError::Sample {
            replicate: item.replicate,
            source,
        })?;
        let [m1, m2, m3, m4, m5] = counts.m;
        records.push(ReplicateRecord {
            replicate: item.replicate,
            seed: item.seed,
            fixed: true,
            t_ext: item.value.t_ext,
            event_count: item.value.event_count,
            m1,
            m2,
            m3,
            m4,
            m5,
            in_delta: counts.in_delta,
            lineage,
        });
    }
    Ok(ReplicateBatch {
        records,
        attempts: batch.attempts,
        truncated: batch.error,
    })
}

pub fn write_records_csv<W: Write>(out: W, records: &[ReplicateRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record([
            "replicate",
            "seed",
            "fixed",
            "t_ext",
            "event_count",
            "m1",
            "m2",
            "m3",
            "m4",
            "m5",
            "in_delta",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Escape frequencies of the two neutral loci of one sampled individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeStats {
    pub locus1: f64,
    pub locus2: f64,
    pub both: f64,
    /// `both - locus1 * locus2`.
    pub dependence: f64,
}

impl EscapeStats {
    /// From per-individual class frequencies.
    pub fn from_classes(f: &[f64; 5]) -> Self {
        let locus1 = f[2] + f[3] + f[4];
        let locus2 = f[1] + f[3] + f[4];
        let both = f[3] + f[4];
        EscapeStats {
            locus1,
            locus2,
            both,
            dependence: both - locus1 * locus2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassVectorBin {
    pub m: [u32; 5],
    pub count: u64,
    pub frequency: f64,
    pub analytic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Empirical {
    pub replicates: u64,
    pub sample_size: u32,
    pub attempts: u64,
    pub fixation_frequency: f64,
    pub fixation_standard_error: f64,
    /// Per-individual class frequencies over all `d * replicates` sampled
    /// individuals, with classes read off the sample's partition.
    pub class_counts: [u64; 5],
    pub class_frequencies: [f64; 5],
    /// Standard errors over replicates, so that individuals of one sample
    /// are not treated as independent.
    pub class_standard_errors: [f64; 5],
    /// Sampled individuals matching none of the five classes because one of
    /// their lineages shares a founder with another sampled individual.
    pub unclassified: u64,
    pub unclassified_frequency: f64,
    /// Per-individual class frequencies read from each individual's own two
    /// lineages; always sum to 1 and, by exchangeability, do not depend on `d`.
    pub lineage_class_frequencies: [f64; 5],
    pub lineage_class_standard_errors: [f64; 5],
    /// Replicates whose partition falls outside the limiting support.
    pub outside_delta: u64,
    pub outside_delta_frequency: f64,
    pub escape: EscapeStats,
    /// Histogram of full class-count vectors over replicates in the support.
    pub class_vectors: Vec<ClassVectorBin>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixationComparison {
    pub empirical: f64,
    pub s: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub geometry: Geometry,
    pub class_weights: [f64; 5],
    /// Total variation between empirical and limiting per-individual class
    /// laws, counting unclassified individuals as a sixth cell of weight 0.
    pub tv_distance: f64,
    pub z_scores: [Option<f64>; 5],
    pub analytic_escape: EscapeStats,
    pub fixation: FixationComparison,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// Standard error of the mean of per-replicate fractions `m_k / d`, from the
/// integer sums of `m_k` and `m_k^2`.
fn clustered_errors(sums: &[u64; 5], squares: &[u64; 5], n: u64, d: u32) -> [f64; 5] {
    std::array::from_fn(|k| {
        if n < 2 {
            return f64::NAN;
        }
        let (n, d) = (n as f64, d as f64);
        let mean = sums[k] as f64 / (n * d);
        let var = (squares[k] as f64 / (d * d) - n * mean * mean) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    })
}

/// Aggregates replicate records. The result depends only on the multiset of
/// records, not on their order.
pub fn summarize(
    records: &[ReplicateRecord],
    d: u32,
    attempts: u64,
    prediction: &AnalyticPrediction,
    geometry: Geometry,
    truncated: bool,
) -> (Empirical, Comparison) {
    let n = records.len() as u64;
    let individuals = n * d as u64;
    let mut class_counts = [0u64; 5];
    let mut class_squares = [0u64; 5];
    let mut lineage_counts = [0u64; 5];
    let mut lineage_squares = [0u64; 5];
    let mut outside_delta = 0u64;
    let mut histogram: BTreeMap<[u32; 5], u64> = BTreeMap::new();
    for r in records {
        let c = r.counts();
        for k in 0..5 {
            let (m, l) = (c.m[k] as u64, r.lineage[k] as u64);
            class_counts[k] += m;
            class_squares[k] += m * m;
            lineage_counts[k] += l;
            lineage_squares[k] += l * l;
        }
        if c.in_delta {
            *histogram.entry(c.m).or_default() += 1;
        } else {
            outside_delta += 1;
        }
    }
    let unclassified = individuals - class_counts.iter().sum::<u64>();
    let class_frequencies = class_counts.map(|c| ratio(c, individuals));
    let class_standard_errors = clustered_errors(&class_counts, &class_squares, n, d);
    let lineage_class_frequencies = lineage_counts.map(|c| ratio(c, individuals));
    let lineage_class_standard_errors =
        clustered_errors(&lineage_counts, &lineage_squares, n, d);
    let class_vectors = histogram
        .into_iter()
        .map(|(m, count)| ClassVectorBin {
            m,
            count,
            frequency: ratio(count, n),
            analytic: prediction
                .pmf(geometry, d, &ClassCounts::of(m))
                .unwrap_or(f64::NAN),
        })
        .collect();
    let fixation_frequency = ratio(n, attempts);
    let empirical = Empirical {
        replicates: n,
        sample_size: d,
        attempts,
        fixation_frequency,
        fixation_standard_error: (fixation_frequency * (1.0 - fixation_frequency)
            / attempts as f64)
            .sqrt(),
        class_counts,
        class_frequencies,
        class_standard_errors,
        unclassified,
        unclassified_frequency: ratio(unclassified, individuals),
        lineage_class_frequencies,
        lineage_class_standard_errors,
        outside_delta,
        outside_delta_frequency: ratio(outside_delta, n),
        escape: EscapeStats::from_classes(&class_frequencies),
        class_vectors,
        truncated,
    };

    let weights = prediction.class_weights(geometry);
    let tv_distance = 0.5
        * (class_frequencies
            .iter()
            .zip(&weights)
            .map(|(f, w)| (f - w).abs())
            .sum::<f64>()
            + empirical.unclassified_frequency);
    let z_scores = std::array::from_fn(|k| {
        let w = weights[k];
        (w > 0.0 && w < 1.0 && individuals > 0)
            .then(|| (class_frequencies[k] - w) / (w * (1.0 - w) / individuals as f64).sqrt())
    });
    let s = prediction.derived.s;
    let comparison = Comparison {
        geometry,
        class_weights: weights,
        tv_distance,
        z_scores,
        analytic_escape: EscapeStats::from_classes(&weights),
        fixation: FixationComparison {
            empirical: fixation_frequency,
            s,
            z: (fixation_frequency - s) / (s * (1.0 - s) / attempts as f64).sqrt(),
        },
    };
    (empirical, comparison)
}

#[derive(Debug, Clone, Serialize)]
pub struct Runtime {
    pub seconds: f64,
    pub threads: usize,
    pub parallel_feature: bool,
}

/// What a run produced; files have already been written.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub mode: Mode,
    pub json: serde_json::Value,
    pub records: Vec<ReplicateRecord>,
    pub truncated: Option<EngineError>,
}

impl ExperimentOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.truncated.is_some() {
            4
        } else {
            0
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), ExperimentError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Runs the configured mode, writing any configured output files.
pub fn run_experiment(
    config: &ExperimentConfig,
    execution: Execution,
) -> Result<ExperimentOutcome, ExperimentError> {
    let started = Instant::now();
    let mode = config
        .mode
        .ok_or_else(|| ConfigError::MissingKey("mode".into()))?;
    config.check_for(mode)?;
    let params = &config.params;
    validate_sweep_regime(params).into_result()?;
    let prediction = predict(params)?;
    let runtime = |started: Instant| Runtime {
        seconds: started.elapsed().as_secs_f64(),
        threads: current_threads(execution),
        parallel_feature: Execution::parallel_available(),
    };

    let (json, records, truncated) = match mode {
        Mode::Analytic => (prediction.to_json(), Vec::new(), None),
        Mode::Simulate | Mode::Compare => {
            let opts = BatchOptions {
                sim: SimOptions {
                    eps: config.eps_diag,
                    ..SimOptions::default()
                },
                max_attempts: config.max_attempts,
                execution,
            };
            let n_fixed = config.n_fixed.expect("checked for this mode");
            let batch = simulate_replicates(params, config.d, n_fixed, config.master_seed, &opts)?;
            if let Some(path) = &config.out_csv {
                write_records_csv(create(path)?, &batch.records)?;
            }
            if let (Some(path), Some(first)) = (&config.out_trajectory, batch.records.first()) {
                let traced = run_sweep(
                    params,
                    first.seed,
                    &SimOptions {
                        trajectory_stride: Some(config.trajectory_stride),
                        ..opts.sim.clone()
                    },
                )?;
                write_trajectory_csv(create(path)?, traced.trajectory.as_deref().unwrap_or(&[]))?;
            }
            let (empirical, comparison) = summarize(
                &batch.records,
                config.d,
                batch.attempts,
                &prediction,
                params.geometry,
                batch.truncated.is_some(),
            );
            let json = serde_json::json!({
                "config_echo": config.echo(),
                "analytic": analytic_block(&prediction),
                "empirical": empirical,
                "comparison": (mode == Mode::Compare).then_some(comparison),
                "runtime": runtime(started),
            });
            (json, batch.records, batch.truncated)
        }
        Mode::Diagnostics => {
            let mut json = diagnostics(config, &prediction, execution)?;
            json["runtime"] = serde_json::to_value(runtime(started)).unwrap();
            (json, Vec::new(), None)
        }
    };
    if let Some(path) = &config.out_json {
        write_json(path, &json)?;
    }
    Ok(ExperimentOutcome {
        mode,
        json,
        records,
        truncated,
    })
}

fn analytic_block(prediction: &AnalyticPrediction) -> serde_json::Value {
    let mut v = prediction.to_json();
    v["separated_weights"] = serde_json::json!(prediction.theorem2);
    v
}

fn diagnostics(
    config: &ExperimentConfig,
    prediction: &AnalyticPrediction,
    execution: Execution,
) -> Result<serde_json::Value, ExperimentError> {
    let params = &config.params;
    let eps = config.eps_diag;
    let eps_k = eps_level(params, eps) as u64;
    let runs = config.n_fixed.unwrap_or(200).max(2);
    let s = prediction.derived.s;

    let mut levels: Vec<u64> = [20, 10, 5]
        .iter()
        .map(|div| (eps_k / div).max(1))
        .filter(|&k| k < eps_k)
        .collect();
    levels.dedup();
    let upcrossings = if levels.is_empty() {
        serde_json::Value::Null
    } else {
        let means = mean_upcrossings(params, &levels, eps, runs, config.master_seed, execution)?;
        serde_json::json!({
            "eps": eps,
            "eps_k": eps_k,
            "levels": levels,
            "expected": levels.iter().map(|&k| expected_upcrossings(s, eps_k, k)).collect::<Vec<_>>(),
            "mean": means.mean,
            "standard_error": means.standard_error,
            "runs": means.runs,
            "attempts": means.attempts,
        })
    };

    let nbar = prediction.derived.nbar;
    let z = LvState::new(nbar[0], eps);
    let t_eps = t_eps_of_z(params, z, eps, &TEpsOptions::default())?;
    let lv_start = LvState::new(nbar[0], 1.0 / params.capacity as f64);
    let lv_end = lv_flow(params, lv_start, 100.0, &StepControl::default())?.last();

    let moran_runs = runs.min(200);
    let t_end = 1.0;
    let counts = map_indexed(execution, 0..moran_runs, |j| {
        moran_birth_count(
            params,
            Allele::Mutant,
            t_end,
            replicate_seed(config.master_seed ^ 0x6d6f_7261_6e00, j),
        )
    });
    let mut total = 0u64;
    let mut size = 0;
    for c in counts {
        let c = c?;
        total += c.events;
        size = c.size;
    }
    Ok(serde_json::json!({
        "config_echo": config.echo(),
        "analytic": analytic_block(prediction),
        "fixation_prob": s,
        "upcrossings": upcrossings,
        "t_eps": { "eps": eps, "z": [z.n_resident, z.n_mutant], "value": t_eps },
        "lv": {
            "z": [lv_start.n_resident, lv_start.n_mutant],
            "t_end": 100.0,
            "end": [lv_end.n_resident, lv_end.n_mutant],
        },
        "moran": {
            "allele": "a",
            "t_end": t_end,
            "runs": moran_runs,
            "size": size,
            "mean_events": total as f64 / moran_runs as f64,
            "expected_events": params.f(Allele::Mutant) * nbar[1] * params.capacity as f64 * t_end,
        },
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::predict;
    use proptest::prelude::*;

    fn record(replicate: u64, m: [u32; 5], in_delta: bool) -> ReplicateRecord {
        ReplicateRecord {
            replicate,
            seed: replicate * 7,
            fixed: true,
            t_ext: 1.0 + replicate as f64,
            event_count: 10,
            m1: m[0],
            m2: m[1],
            m3: m[2],
            m4: m[3],
            m5: m[4],
            in_delta,
            lineage: m,
        }
    }

    fn prediction() -> AnalyticPrediction {
        let ln_k = 1000f64.ln();
        predict(&EcoParams::reference(0.2 / ln_k, 0.3 / ln_k, Geometry::Adjacent)).unwrap()
    }

    #[test]
    fn frequencies_close_over_buckets() {
        let records = vec![
            record(0, [2, 0, 0, 0, 0], true),
            record(1, [1, 1, 0, 0, 0], true),
            record(2, [0, 0, 0, 0, 0], false),
            record(3, [0, 0, 1, 0, 0], false),
            record(4, [0, 1, 0, 0, 1], true),
        ];
        let (e, c) = summarize(&records, 2, 15, &prediction(), Geometry::Adjacent, false);
        assert_eq!(e.class_counts, [3, 2, 1, 0, 1]);
        assert_eq!(e.unclassified, 3);
        assert_eq!(e.class_counts.iter().sum::<u64>() + e.unclassified, 10);
        let total: f64 = e.class_frequencies.iter().sum::<f64>() + e.unclassified_frequency;
        assert!((total - 1.0).abs() < 1e-12);
        let bins: f64 = e.class_vectors.iter().map(|b| b.frequency).sum();
        assert!((bins + e.outside_delta_frequency - 1.0).abs() < 1e-12);
        assert_eq!(e.outside_delta, 2);
        let bins: u64 = e.class_vectors.iter().map(|b| b.count).sum();
        assert_eq!(bins + e.outside_delta, 5);
        assert!((e.fixation_frequency - 1.0 / 3.0).abs() < 1e-15);
        assert!(c.tv_distance >= 0.0 && c.tv_distance <= 1.0);
    }

    fn record_strategy(d: u32) -> impl Strategy<Value = ReplicateRecord> {
        (0..=d, 0..=d, 0..=d, any::<bool>(), any::<u64>()).prop_map(move |(a, b, c, delta, seed)| {
            let a = a.min(d);
            let b = b.min(d - a);
            let c = c.min(d - a - b);
            let m = if delta { [a, b, c, 0, d - a - b - c] } else { [a, 0, c, b, 0] };
            let mut r = record(seed % 1000, m, delta);
            r.seed = seed;
            r.lineage = [a, b, c, 0, d - a - b - c];
            r
        })
    }

    proptest! {
        #[test]
        fn summary_ignores_completion_order(
            records in proptest::collection::vec(record_strategy(3), 2..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let pred = prediction();
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut crate::seed::sampling_rng(seed));
            let a = summarize(&records, 3, 100, &pred, Geometry::Adjacent, false);
            let b = summarize(&shuffled, 3, 100, &pred, Geometry::Adjacent, false);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_weight_class_has_no_z_score() {
        let records = vec![record(0, [0, 0, 0, 1, 0], true)];
        let (_, c) = summarize(&records, 1, 3, &prediction(), Geometry::Separated, false);
        assert_eq!(c.class_weights[3], 0.0);
        assert!(c.z_scores[3].is_none());
        assert!(c.z_scores[0].is_some());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ExperimentError::Config(ConfigError::MissingKey("x".into())).exit_code(), 2);
        assert_eq!(
            ExperimentError::Regime(RegimeError { violations: vec![] }).exit_code(),
            3
        );
        assert_eq!(
            ExperimentError::Engine(EngineError::EventCapExceeded { seed: 0, events: 1, t: 0.0 })
                .exit_code(),
            4
        );
    }

    #[test]
    fn csv_header_when_empty() {
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "replicate,seed,fixed,t_ext,event_count,m1,m2,m3,m4,m5,in_delta\n"
        );
    }

    #[test]
    fn escape_stats_from_weights() {
        let p = prediction();
        let e = EscapeStats::from_classes(&p.ps.p);
        let q = p.qs;
        assert!((e.locus1 - (1.0 - q.q1)).abs() < 1e-12);
        assert!((e.locus2 - (1.0 - q.q1 * q.q2)).abs() < 1e-12);
        assert!(e.dependence > 0.0);
    }
}
