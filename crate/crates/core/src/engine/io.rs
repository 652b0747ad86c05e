//! CSV dumps of run outcomes and population trajectories.

use std::io::Write;

use serde::Serialize;

use super::sweep::TrajectoryPoint;

/// Row of the per-outcome CSV (`replicate,seed,fixed,t_ext,event_count,attempts`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeRow {
    pub replicate: u64,
    pub seed: u64,
    pub fixed: bool,
    pub t_ext: f64,
    pub event_count: u64,
    /// Attempts consumed up to and including this outcome.
    pub attempts: u64,
}

pub fn write_outcomes_csv<W: Write>(out: W, rows: &[OutcomeRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["replicate", "seed", "fixed", "t_ext", "event_count", "attempts"])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    #[serde(rename = "n_A")]
    n_resident: usize,
    n_a: usize,
}

/// Writes `t,n_A,n_a` rows.
pub fn write_trajectory_csv<W: Write>(out: W, points: &[TrajectoryPoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if points.is_empty() {
        w.write_record(["t", "n_A", "n_a"])?;
    }
    for p in points {
        w.serialize(TrajectoryRow {
            t: p.t,
            n_resident: p.n_resident,
            n_a: p.n_mutant,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_header_and_rows() {
        let mut buf = Vec::new();
        write_outcomes_csv(
            &mut buf,
            &[OutcomeRow {
                replicate: 0,
                seed: 17,
                fixed: true,
                t_ext: 12.5,
                event_count: 99,
                attempts: 3,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "replicate,seed,fixed,t_ext,event_count,attempts\n0,17,true,12.5,99,3\n"
        );
    }

    #[test]
    fn trajectory_header() {
        let mut buf = Vec::new();
        write_trajectory_csv(
            &mut buf,
            &[TrajectoryPoint {
                t: 0.0,
                n_resident: 1500,
                n_mutant: 1,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,n_A,n_a\n0.0,1500,1\n");
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,n_A,n_a\n");
    }
}
