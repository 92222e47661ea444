//! Sweeps behind each figure-style CSV. Trials run in parallel on
//! independent substreams; rows are written in trial order afterwards.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::baseline::baseline_trial;
use super::{
    dynamics_trial_with, nominal_profile, prepare_design, run_traced_trial, run_trial_with, Experiment, Purpose,
    SimConfig, SimError, Streams, TrialResult,
};
use crate::analysis;
use crate::phase1;
use crate::scenario;

pub const SPEED_SWEEP: [f64; 9] = [40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0, 75.0, 80.0];
pub const GROUP_SWEEP: [usize; 4] = [4, 8, 16, 24];
pub const PACKET_GAIN_SWEEP: [usize; 6] = [2, 4, 8, 12, 16, 24];
pub const LEAVE_SWEEP: [f64; 5] = [0.0, 0.125, 0.25, 0.375, 0.5];

/// CSV files written by one experiment.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub files: Vec<PathBuf>,
}

/// Runs `trials` independent evaluations of `f(trial)`, in trial order.
pub fn par_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(u64) -> Result<T, SimError> + Sync,
{
    (0..trials as u64).into_par_iter().map(|t| f(t)).collect()
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn mean_opt(xs: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.into_iter().flatten().collect();
    (!v.is_empty()).then(|| mean(v))
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn writer(dir: &Path, name: &str, header: &[&str], out: &mut ExperimentOutput) -> Result<csv::Writer<fs::File>, SimError> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    out.files.push(path);
    Ok(w)
}

/// Runs the experiment selected in `cfg` and writes its CSV into `out_dir`.
pub fn run_experiment(cfg: &SimConfig, out_dir: &Path, trace: bool) -> Result<ExperimentOutput, SimError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut out = ExperimentOutput::default();
    match cfg.experiment {
        Experiment::Single => single(cfg, out_dir, trace, &mut out)?,
        Experiment::Speed => speed(cfg, out_dir, &mut out)?,
        Experiment::GroupSize => group_size(cfg, out_dir, &mut out)?,
        Experiment::RankCdf => rank_cdf(cfg, out_dir, &mut out)?,
        Experiment::Delay => delay(cfg, out_dir, &mut out)?,
        Experiment::Rate => rate(cfg, out_dir, &mut out)?,
        Experiment::Dynamics => dynamics(cfg, out_dir, &mut out)?,
    }
    Ok(out)
}

pub const TRIALS_HEADER: [&str; 19] = [
    "trial",
    "seed",
    "vehicles",
    "phase1_duration",
    "broadcast_packets",
    "min_k_expected",
    "min_k_received",
    "kg_expected",
    "kg_received",
    "transmissions",
    "phase2_delay",
    "lp_bound",
    "mean_overhead",
    "bottleneck_overhead",
    "exhausted",
    "stalled",
    "clamped",
    "undecodable",
    "verified",
];

fn single(cfg: &SimConfig, dir: &Path, trace: bool, out: &mut ExperimentOutput) -> Result<(), SimError> {
    let design = prepare_design(cfg)?;
    let results = par_trials(cfg.trials, |t| run_trial_with(cfg, &design, cfg.seed, t))?;
    let mut w = writer(dir, "trials.csv", &TRIALS_HEADER, out)?;
    for r in &results {
        let min_recv = r.received.iter().copied().min().unwrap_or(0);
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.members.len().to_string(),
            num(r.phase1_duration),
            r.broadcast_packets.to_string(),
            num(min_of(&r.expected_k)),
            min_recv.to_string(),
            num(r.expected_kg),
            r.group_received.to_string(),
            r.transmissions.to_string(),
            num(r.phase2_delay),
            opt(r.lp_bound),
            opt(mean_opt(r.overhead.iter().copied())),
            opt(r.bottleneck_overhead()),
            u8::from(r.exhausted).to_string(),
            u8::from(r.stalled).to_string(),
            r.clamped.to_string(),
            r.undecodable.to_string(),
            r.verified.to_string(),
        ])?;
    }
    w.flush()?;
    if trace {
        run_traced_trial(cfg, cfg.seed, dir)?;
        out.files.push(dir.join("trace_phase1.csv"));
        out.files.push(dir.join("trace_phase2.csv"));
    }
    Ok(())
}

pub const SPEED_HEADER: [&str; 10] = [
    "v_kmh",
    "trials",
    "phase1_duration",
    "min_k_expected",
    "mean_k_expected",
    "kg_expected",
    "mean_k_received",
    "kg_received",
    "transmissions",
    "phase2_delay",
];

fn speed(cfg: &SimConfig, dir: &Path, out: &mut ExperimentOutput) -> Result<(), SimError> {
    let mut w = writer(dir, "speed.csv", &SPEED_HEADER, out)?;
    for &v in &SPEED_SWEEP {
        let mut c = cfg.clone();
        c.group.v_mean = v;
        let design = prepare_design(&c)?;
        let rs = par_trials(c.trials, |t| run_trial_with(&c, &design, c.seed, t))?;
        w.write_record([
            num(v),
            rs.len().to_string(),
            num(mean(rs.iter().map(|r| r.phase1_duration))),
            num(mean(rs.iter().map(|r| min_of(&r.expected_k)))),
            num(mean(rs.iter().map(|r| mean(r.expected_k.iter().copied())))),
            num(mean(rs.iter().map(|r| r.expected_kg))),
            num(mean(rs.iter().map(|r| mean(r.received.iter().map(|&x| x as f64))))),
            num(mean(rs.iter().map(|r| r.group_received as f64))),
            num(mean(rs.iter().map(|r| r.transmissions as f64))),
            num(mean(rs.iter().map(|r| r.phase2_delay))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const GROUP_SIZE_HEADER: [&str; 7] = [
    "k",
    "trials",
    "mean_k_expected",
    "kg_expected",
    "gain_expected",
    "mean_k_received",
    "kg_received",
];

/// Phase-1 reception gain of the group over its average member. Only the
/// broadcast is simulated.
fn group_size(cfg: &SimConfig, dir: &Path, out: &mut ExperimentOutput) -> Result<(), SimError> {
    let mut w = writer(dir, "groupsize.csv", &GROUP_SIZE_HEADER, out)?;
    for &k in &PACKET_GAIN_SWEEP {
        let mut c = cfg.clone();
        c.group.k = k;
        let rows = par_trials(c.trials, |t| {
            let streams = Streams::new(c.seed, t);
            let traj = scenario::build_group(&c.group, &c.geometry, &mut streams.rng(Purpose::Geometry, 0))?;
            let tp = c.packet_time();
            let (n, jn) = scenario::broadcast_budget(&traj, tp, c.batch_size);
            if jn == 0 {
                return Err(SimError::NoBroadcast);
            }
            let profile = scenario::loss_profile(&traj, &c.channel, tp, n, c.batch_size)?;
            let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|i| streams.rng(Purpose::Reception, i)).collect();
            let ledger = phase1::draw_receptions(&profile, &mut rngs)?;
            let ek = mean((0..k).map(|i| phase1::expected_individual(&profile, i).1));
            let ekg = phase1::expected_group(&profile, k).1;
            let rk = mean((0..k).map(|i| ledger.total(i) as f64));
            Ok((ek, ekg, rk, ledger.group_total(k) as f64))
        })?;
        let ek = mean(rows.iter().map(|r| r.0));
        let ekg = mean(rows.iter().map(|r| r.1));
        w.write_record([
            k.to_string(),
            rows.len().to_string(),
            num(ek),
            num(ekg),
            num(ekg / ek),
            num(mean(rows.iter().map(|r| r.2))),
            num(mean(rows.iter().map(|r| r.3))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Bottleneck ranks at completion, pooled over trials.
pub fn bottleneck_rank_samples(results: &[TrialResult]) -> Vec<usize> {
    results
        .iter()
        .filter_map(|r| r.bottleneck_ranks.as_ref())
        .flatten()
        .copied()
        .collect()
}

fn rank_cdf(cfg: &SimConfig, dir: &Path, out: &mut ExperimentOutput) -> Result<(), SimError> {
    let design = prepare_design(cfg)?;
    let rs = par_trials(cfg.trials, |t| run_trial_with(cfg, &design, cfg.seed, t))?;
    let empirical = analysis::empirical_rank_cdf(&bottleneck_rank_samples(&rs), cfg.batch_size);
    let path = dir.join("rank_cdf.csv");
    analysis::write_rank_csv(&design.estimate, &empirical, fs::File::create(&path)?)?;
    out.files.push(path);
    Ok(())
}

pub const DELAY_HEADER: [&str; 9] = [
    "k",
    "trials",
    "bats_transmissions",
    "bats_delay",
    "lp_bound",
    "lp_delay",
    "baseline_transmissions",
    "baseline_delay",
    "bats_undecodable",
];

fn delay(cfg: &SimConfig, dir: &Path, out: &mut ExperimentOutput) -> Result<(), SimError> {
    let mut w = writer(dir, "delay.csv", &DELAY_HEADER, out)?;
    for &k in &GROUP_SWEEP {
        let mut c = cfg.clone();
        c.group.k = k;
        let design = prepare_design(&c)?;
        let rs = par_trials(c.trials, |t| {
            Ok((run_trial_with(&c, &design, c.seed, t)?, baseline_trial(&c, c.seed, t)?))
        })?;
        let slot = c.backoff_max + c.v2v_packet_time();
        let lp = mean_opt(rs.iter().map(|r| r.0.lp_bound));
        w.write_record([
            k.to_string(),
            rs.len().to_string(),
            num(mean(rs.iter().map(|r| r.0.transmissions as f64))),
            num(mean(rs.iter().map(|r| r.0.phase2_delay))),
            opt(lp),
            opt(lp.map(|x| x * slot)),
            num(mean(rs.iter().map(|r| r.1.transmissions as f64))),
            num(mean(rs.iter().map(|r| r.1.phase2_delay))),
            rs.iter().map(|r| r.0.undecodable).sum::<usize>().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Window-wise mean of several rate series of unequal length; missing
/// windows count as zero.
fn average_series(series: &[&[f64]]) -> Vec<f64> {
    let len = series.iter().map(|s| s.len()).max().unwrap_or(0);
    (0..len)
        .map(|t| mean(series.iter().map(|s| s.get(t).copied().unwrap_or(0.0))))
        .collect()
}

fn rate(cfg: &SimConfig, dir: &Path, out: &mut ExperimentOutput) -> Result<(), SimError> {
    let design = prepare_design(cfg)?;
    let rs = par_trials(cfg.trials, |t| {
        Ok((run_trial_with(cfg, &design, cfg.seed, t)?, baseline_trial(cfg, cfg.seed, t)?))
    })?;
    let bats = average_series(&rs.iter().map(|r| r.0.download_rate.as_slice()).collect::<Vec<_>>());
    let base = average_series(&rs.iter().map(|r| r.1.download_rate.as_slice()).collect::<Vec<_>>());
    let mut w = writer(dir, "rate.csv", &["t", "bats_rate", "baseline_rate"], out)?;
    for t in 0..bats.len().max(base.len()) {
        w.write_record([
            t.to_string(),
            num(bats.get(t).copied().unwrap_or(0.0)),
            num(base.get(t).copied().unwrap_or(0.0)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const DYNAMICS_HEADER: [&str; 6] = [
    "leave_fraction",
    "leavers",
    "trials",
    "transmissions",
    "phase2_delay",
    "inflation",
];

fn dynamics(cfg: &SimConfig, dir: &Path, out: &mut ExperimentOutput) -> Result<(), SimError> {
    let design = prepare_design(cfg)?;
    let k = cfg.group.k;
    let mut w = writer(dir, "dynamics.csv", &DYNAMICS_HEADER, out)?;
    let mut reference = None;
    // The sweep always includes the configured fraction.
    let mut fractions = LEAVE_SWEEP.to_vec();
    if !fractions.contains(&cfg.leave_fraction) {
        fractions.push(cfg.leave_fraction);
        fractions.sort_by(f64::total_cmp);
    }
    for fr in fractions {
        let leavers = (fr * k as f64).ceil() as usize;
        if leavers >= k {
            continue;
        }
        let rs = par_trials(cfg.trials, |t| dynamics_trial_with(cfg, &design, fr, cfg.seed, t))?;
        let tx = mean(rs.iter().map(|r| r.transmissions as f64));
        let base = *reference.get_or_insert(tx);
        w.write_record([
            num(fr),
            leavers.to_string(),
            rs.len().to_string(),
            num(tx),
            num(mean(rs.iter().map(|r| r.phase2_delay))),
            num(tx / base - 1.0),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Nominal per-vehicle `K_i` for a config, as used by the estimator.
pub fn nominal_expected_k(cfg: &SimConfig) -> Result<Vec<f64>, SimError> {
    let p = nominal_profile(cfg)?;
    Ok((0..p.vehicles()).map(|i| phase1::expected_individual(&p, i).1).collect())
}
