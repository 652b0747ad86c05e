use std::path::Path;
use std::process::{Command, Output};

const PARAMS: &str = "\
f_A = 2
f_a = 3
D_A = 0.5
D_a = 0.5
C_AA = 1
C_Aa = 1
C_aA = 1
C_aa = 1
r1_logK = 0.2
r2_logK = 0.3
";

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(&path, format!("{PARAMS}{extra}")).unwrap();
    path
}

fn sweepsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sweepsim"))
        .args(args)
        .env_remove("SWEEPSIM_THREADS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn analytic_mode_prints_the_formula() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "K = 1000\n");
    let out = sweepsim(&["analytic", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!((v["q1"].as_f64().unwrap() - (-0.6f64).exp()).abs() < 1e-12);
    let sum: f64 = (1..=5).map(|k| v[format!("p{k}")].as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn compare_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("reps.csv");
    let summary = dir.path().join("summary.json");
    let traj = dir.path().join("traj.csv");
    let cfg = write_config(
        dir.path(),
        &format!(
            "K = 100\nd = 2\nn_fixed = 5\nout_csv = {}\nout_json = {}\nout_trajectory = {}\n",
            csv.display(),
            summary.display(),
            traj.display()
        ),
    );
    let out = sweepsim(&["compare", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    for key in ["config_echo", "analytic", "empirical", "comparison", "runtime"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["config_echo"]["master_seed"], 9);
    let from_file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(from_file["empirical"], v["empirical"]);

    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replicate,seed,fixed,t_ext,event_count,m1,m2,m3,m4,m5,in_delta"
    );
    assert_eq!(lines.count(), 5);
    assert!(std::fs::read_to_string(&traj).unwrap().starts_with("t,n_A,n_a\n"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "K = 100\nr1 = 0.1\n");
    let out = sweepsim(&["analytic", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("conflicting keys"));

    let cfg = write_config(dir.path(), "K = 100\n");
    let out = sweepsim(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn regime_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, PARAMS.replace("f_a = 3", "f_a = 1") + "K = 100\n").unwrap();
    let out = sweepsim(&["analytic", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("S_aA"));
}

#[test]
fn attempt_cap_exits_4_with_parseable_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("reps.csv");
    let cfg = write_config(
        dir.path(),
        &format!("K = 100\nn_fixed = 50\nmax_attempts = 10\nout_csv = {}\n", csv.display()),
    );
    let out = sweepsim(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let v = json(&out);
    assert_eq!(v["empirical"]["truncated"], true);
    assert_eq!(v["empirical"]["attempts"], 10);
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let rows = reader.records().collect::<Result<Vec<_>, _>>().unwrap();
    assert_eq!(rows.len() as u64, v["empirical"]["replicates"].as_u64().unwrap());
}

#[test]
fn unreadable_config_exits_1() {
    let out = sweepsim(&["analytic", "--config", "/nonexistent/sweepsim.conf"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "K = 100\nn_fixed = 3\n");
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_sweepsim"))
            .args(["simulate", "--config", cfg.to_str().unwrap()])
            .env("SWEEPSIM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        json(&out)
    };
    let one = run("1");
    let two = run("2");
    assert_eq!(one["empirical"], two["empirical"]);
}
