//! End-to-end behaviour of trials, configuration and the CLI.

use std::process::Command;

use bats_v2x::harness::{dynamics_experiment, run_experiment, run_trial, Experiment, SimConfig, SimError};

fn small() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.file_packets = 640;
    cfg.payload_bytes = 8;
    cfg.group.k = 4;
    cfg.group.v_mean = 110.0;
    cfg
}

fn temp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("bats-v2x-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn trial_is_deterministic() {
    let cfg = small();
    let a = run_trial(&cfg, 5).unwrap();
    assert_eq!(a, run_trial(&cfg, 5).unwrap());
    assert_ne!(a.received, run_trial(&cfg, 6).unwrap().received);
    assert_eq!(a.mismatched, 0);
}

#[test]
fn slow_group_needs_no_sharing() {
    // At 40 km/h every vehicle expects at least F packets, so the LP needs no
    // V2V traffic; decoding overhead may still leave a short Phase 2.
    let mut cfg = SimConfig::default();
    cfg.payload_bytes = 8;
    cfg.group.v_mean = 40.0;
    let r = run_trial(&cfg, 1).unwrap();
    assert!(r.expected_k.iter().all(|&k| k >= cfg.file_packets as f64));
    assert_eq!(r.lp_bound, Some(0.0));
    assert!(r.all_decoded());
    assert!((r.transmissions as f64) < 0.2 * cfg.file_packets as f64);

    cfg.group.v_mean = 35.0;
    let r = run_trial(&cfg, 1).unwrap();
    assert_eq!(r.transmissions, 0);
    assert_eq!(r.verified, cfg.group.k);
}

#[test]
fn no_leavers_matches_plain_trial() {
    let cfg = small();
    assert_eq!(dynamics_experiment(&cfg, 0.0, 3).unwrap(), run_trial(&cfg, 3).unwrap());
}

#[test]
fn quarter_of_eight_leave() {
    let mut cfg = small();
    cfg.group.k = 8;
    let r = dynamics_experiment(&cfg, 0.25, 3).unwrap();
    assert_eq!(r.members.len(), 6);
    assert_eq!(r.completion_time.len(), 6);
}

#[test]
fn config_errors_name_the_field() {
    let err = SimConfig::from_str("file_packets = \"many\"").unwrap_err().to_string();
    assert!(err.contains("file_packets"), "{err}");
    let err = SimConfig::from_str("no_such_key = 1").unwrap_err().to_string();
    assert!(err.contains("no_such_key"), "{err}");
    assert!(SimConfig::from_str("batch_size = 0").is_err());
}

#[test]
fn single_experiment_writes_trials_csv() {
    let mut cfg = small();
    cfg.trials = 2;
    cfg.experiment = Experiment::Single;
    let dir = temp_dir("single");
    let out = run_experiment(&cfg, &dir, false).unwrap();
    let text = std::fs::read_to_string(dir.join("trials.csv")).unwrap();
    assert!(out.files.iter().any(|f| f.ends_with("trials.csv")));
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("trial,seed,vehicles"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn invalid_config_is_a_config_error() {
    let mut cfg = small();
    cfg.batch_size = 0;
    assert!(matches!(
        run_experiment(&cfg, &temp_dir("invalid"), false),
        Err(SimError::Config(_))
    ));
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_simulate");
    let dir = temp_dir("cli");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "rate_bps = -1\n").unwrap();
    let status = Command::new(bin).args(["--config", bad.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(bin).args(["--experiment", "bogus"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let good = dir.join("good.toml");
    std::fs::write(&good, "file_packets = 640\npayload_bytes = 8\nk = 4\nv_mean = 110.0\n").unwrap();
    let status = Command::new(bin)
        .args(["--config", good.to_str().unwrap(), "--seed", "4", "--trials", "1", "--experiment", "single"])
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.join("out/trials.csv").exists());

    // k = 1 cannot form a group.
    std::fs::write(&good, "k = 1\n").unwrap();
    let status = Command::new(bin)
        .args(["--config", good.to_str().unwrap(), "--out"])
        .arg(dir.join("out2"))
        .status()
        .unwrap();
    assert!(matches!(status.code(), Some(2) | Some(3)));
    let _ = std::fs::remove_dir_all(&dir);
}
