//! Configuration, trial orchestration, the block-RLNC baseline and the
//! experiment sweeps that write CSV output.

mod baseline;
mod config;
mod experiments;

use std::path::Path;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{self, AnalysisError, LpInstance, RankEstimate};
use crate::channel::ChannelError;
use crate::codec::{coverage_mean_degree, BatchCatalog, CodecError, DegreeDistribution, DegreeOptimizer, SourceFile};
use crate::phase1::{self, Phase1Error};
use crate::phase2::{self, SharingTiming, UtilityInputs};
use crate::scenario::{self, GroupConfig, ScenarioError, SpacingLaw};

pub use baseline::{baseline_block_rlnc, baseline_trial};
pub use config::{ConfigError, Experiment, SimConfig};
pub use experiments::{
    bottleneck_rank_samples, nominal_expected_k, par_trials, run_experiment, ExperimentOutput, GROUP_SWEEP, LEAVE_SWEEP,
    PACKET_GAIN_SWEEP, SPEED_SWEEP,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Phase1(#[from] Phase1Error),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("every vehicle left the group")]
    AllVehiclesLeft,
    #[error("the broadcast window is shorter than one batch")]
    NoBroadcast,
    #[error("batch size {batch_size} does not divide the file size {file_packets}")]
    NotDivisible { file_packets: usize, batch_size: usize },
    #[error("output failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Independent random streams, one per `(trial, purpose, vehicle)`.
#[derive(Clone, Debug)]
pub struct Streams {
    key: [u8; 32],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Geometry = 1,
    File = 2,
    Encode = 3,
    Reception = 4,
    Schedule = 5,
    Sharing = 6,
    Dynamics = 7,
    Baseline = 8,
}

impl Streams {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut root = ChaCha8Rng::seed_from_u64(seed);
        root.set_stream(trial);
        let mut key = [0u8; 32];
        rand::RngCore::fill_bytes(&mut root, &mut key);
        Streams { key }
    }

    pub fn rng(&self, purpose: Purpose, vehicle: usize) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::from_seed(self.key);
        r.set_stream(((purpose as u64) << 32) | vehicle as u64);
        r
    }
}

/// The RSU's code design: the rank distribution predicted for the
/// bottleneck vehicle and the degree distribution optimized for it.
#[derive(Clone, Debug)]
pub struct Design {
    pub estimate: RankEstimate,
    pub psi: DegreeDistribution,
    /// Source packets per batch the optimizer certified.
    pub theta: f64,
    /// `E[rank] / θ - 1` of the design.
    pub design_overhead: f64,
}

/// A copy of the group config with no speed jitter and every gap at the
/// mean of the spacing law.
pub fn nominal_group(group: &GroupConfig) -> GroupConfig {
    let mean_gap = match group.spacing {
        SpacingLaw::Uniform { low, high } => 0.5 * (low + high),
        SpacingLaw::Constant(g) => g,
    };
    GroupConfig {
        v_jitter: 0.0,
        spacing: SpacingLaw::Constant(mean_gap),
        min_gap: group.min_gap.min(mean_gap),
        ..group.clone()
    }
}

/// Loss profile of the nominal (jitter-free) group.
pub fn nominal_profile(cfg: &SimConfig) -> Result<crate::channel::LossProfile, SimError> {
    let group = nominal_group(&cfg.group);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let traj = scenario::build_group(&group, &cfg.geometry, &mut rng)?;
    let tp = cfg.packet_time();
    let (n, j) = scenario::broadcast_budget(&traj, tp, cfg.batch_size);
    if j == 0 {
        return Err(SimError::NoBroadcast);
    }
    Ok(scenario::loss_profile(&traj, &cfg.channel, tp, n, cfg.batch_size)?)
}

/// Degree LP settings for a broadcast of `batches` batches.
pub fn optimizer_for(cfg: &SimConfig, batches: usize) -> DegreeOptimizer {
    let mut opt = DegreeOptimizer::for_file(cfg.file_packets, cfg.batch_size);
    if cfg.max_degree > 0 {
        opt.max_degree = cfg.max_degree.min(cfg.file_packets);
    }
    opt.ripple = cfg.degree_ripple;
    if cfg.coverage_miss > 0.0 {
        let floor = coverage_mean_degree(cfg.file_packets, batches, cfg.coverage_miss);
        opt.min_mean_degree = floor.min(opt.max_degree as f64);
    }
    opt
}

/// Estimates the bottleneck rank distribution on the nominal group and
/// optimizes Ψ for it.
pub fn prepare_design(cfg: &SimConfig) -> Result<Design, SimError> {
    cfg.validate()?;
    let profile = nominal_profile(cfg)?;
    let estimate = analysis::estimate_rank_distribution(&profile, cfg.file_packets)?;
    let opt = optimizer_for(cfg, profile.batches()).optimize(&estimate.distribution())?;
    Ok(Design {
        estimate,
        psi: opt.psi,
        theta: opt.theta,
        design_overhead: opt.overhead,
    })
}

/// Everything measured in one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    /// Group members that took part in sharing (original indices).
    pub members: Vec<usize>,
    pub phase1_duration: f64,
    pub broadcast_packets: usize,
    /// `K_i` from the loss profile, whole group.
    pub expected_k: Vec<f64>,
    /// Packets each vehicle received from the RSU.
    pub received: Vec<usize>,
    pub expected_kg: f64,
    /// Packets received by at least one vehicle.
    pub group_received: usize,
    pub transmissions: usize,
    pub phase2_delay: f64,
    /// Seconds from V_1's entry until each member could decode.
    pub completion_time: Vec<Option<f64>>,
    /// `(rank at completion - F) / F` per member.
    pub overhead: Vec<Option<f64>>,
    pub lp_bound: Option<f64>,
    pub exhausted: bool,
    pub stalled: bool,
    pub undecodable: usize,
    /// Members whose recovered file matched the source byte for byte.
    pub verified: usize,
    pub mismatched: usize,
    pub clamped: usize,
    /// The member with the fewest expected RSU receptions (original index).
    pub bottleneck: Option<usize>,
    pub bottleneck_ranks: Option<Vec<usize>>,
    /// Mean accepted innovative packets per second over 1 s windows.
    pub download_rate: Vec<f64>,
}

impl TrialResult {
    pub fn all_decoded(&self) -> bool {
        self.completion_time.iter().all(Option::is_some)
    }

    pub fn bottleneck_overhead(&self) -> Option<f64> {
        let b = self.bottleneck?;
        let pos = self.members.iter().position(|&m| m == b)?;
        self.overhead[pos]
    }
}

/// One trial: group → broadcast → schedules → sharing → analytics.
pub fn run_trial(cfg: &SimConfig, seed: u64) -> Result<TrialResult, SimError> {
    let design = prepare_design(cfg)?;
    simulate(cfg, &design, seed, 0, 0.0, None)
}

/// As [`run_trial`] but with a precomputed design and trial index.
pub fn run_trial_with(cfg: &SimConfig, design: &Design, seed: u64, trial: u64) -> Result<TrialResult, SimError> {
    simulate(cfg, design, seed, trial, 0.0, None)
}

/// A trial in which `⌈fraction · k⌉` random vehicles leave after Phase 1.
pub fn dynamics_experiment(cfg: &SimConfig, leave_fraction: f64, seed: u64) -> Result<TrialResult, SimError> {
    let design = prepare_design(cfg)?;
    simulate(cfg, &design, seed, 0, leave_fraction, None)
}

pub fn dynamics_trial_with(
    cfg: &SimConfig,
    design: &Design,
    leave_fraction: f64,
    seed: u64,
    trial: u64,
) -> Result<TrialResult, SimError> {
    simulate(cfg, design, seed, trial, leave_fraction, None)
}

/// Mean per-window rate of the given event streams.
fn mean_rate(events: &[Vec<f64>], horizon: f64) -> Vec<f64> {
    if events.is_empty() {
        return Vec::new();
    }
    let mut acc: Vec<f64> = Vec::new();
    for ev in events {
        let series = phase1::rate_series(ev, 1.0, horizon);
        if acc.len() < series.len() {
            acc.resize(series.len(), 0.0);
        }
        for (a, (_, r)) in acc.iter_mut().zip(series) {
            *a += r;
        }
    }
    acc.iter().map(|a| a / events.len() as f64).collect()
}

pub(crate) fn simulate(
    cfg: &SimConfig,
    design: &Design,
    seed: u64,
    trial: u64,
    leave_fraction: f64,
    trace_dir: Option<&Path>,
) -> Result<TrialResult, SimError> {
    let streams = Streams::new(seed, trial);
    let m = cfg.batch_size;
    let k = cfg.group.k;
    let traj = scenario::build_group(&cfg.group, &cfg.geometry, &mut streams.rng(Purpose::Geometry, 0))?;
    let tp = cfg.packet_time();
    let (n, jn) = scenario::broadcast_budget(&traj, tp, m);
    if jn == 0 {
        return Err(SimError::NoBroadcast);
    }
    let profile = scenario::loss_profile(&traj, &cfg.channel, tp, n, m)?;

    let file = SourceFile::random(cfg.file_packets, cfg.payload_bytes.max(1), &mut streams.rng(Purpose::File, 0));
    let (catalog, packets) = BatchCatalog::encode(&file, jn, &design.psi, m, &mut streams.rng(Purpose::Encode, 0))?;
    let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|i| streams.rng(Purpose::Reception, i)).collect();
    let bc = match trace_dir {
        Some(dir) => {
            let mut w = csv::Writer::from_path(dir.join("trace_phase1.csv"))?;
            phase1::run_broadcast(&profile, &catalog, &packets, &mut rngs, Some(&mut w))?
        }
        None => phase1::run_broadcast::<_, std::fs::File>(&profile, &catalog, &packets, &mut rngs, None)?,
    };
    drop(packets);

    let expected_k: Vec<f64> = (0..k).map(|i| phase1::expected_individual(&profile, i).1).collect();
    let expected_kg = phase1::expected_group(&profile, k).1;
    let received: Vec<usize> = (0..k).map(|i| bc.ledger.total(i)).collect();
    let group_received = bc.ledger.group_total(k);

    let mut members: Vec<usize> = (0..k).collect();
    if leave_fraction > 0.0 {
        let leaving = (leave_fraction * k as f64).ceil() as usize;
        if leaving >= k {
            return Err(SimError::AllVehiclesLeft);
        }
        let gone = index::sample(&mut streams.rng(Purpose::Dynamics, 0), k, leaving).into_vec();
        members.retain(|i| !gone.contains(i));
    }
    let sub_profile = profile.restrict(&members);
    let sub_ledger = bc.ledger.restrict(&members);
    let mut states: Vec<_> = members.iter().map(|&i| bc.decoders[i].clone()).collect();
    drop(bc.decoders);

    let inputs = UtilityInputs::new(&sub_ledger, &sub_profile);
    let schedules: Vec<_> = members
        .iter()
        .enumerate()
        .map(|(pos, &orig)| phase2::build_schedule(pos, &inputs, &mut streams.rng(Purpose::Schedule, orig)))
        .collect();
    let timing = SharingTiming {
        backoff_max: cfg.backoff_max,
        packet_time: cfg.v2v_packet_time(),
        max_slots: (cfg.max_slot_factor * cfg.file_packets as f64) as usize,
    };
    let stats = phase2::run_sharing(
        &mut states,
        &schedules,
        sub_profile.v2v_matrix(),
        &timing,
        &mut streams.rng(Purpose::Sharing, 0),
        trace_dir.is_some(),
    );
    if let Some(dir) = trace_dir {
        phase2::write_trace(&stats.trace, std::fs::File::create(dir.join("trace_phase2.csv"))?)?;
    }

    let t1 = traj.phase1_duration();
    let slot = timing.slot();
    let f = cfg.file_packets as f64;
    let mut completion_time = Vec::with_capacity(members.len());
    let mut overhead = Vec::with_capacity(members.len());
    let mut final_ranks = Vec::with_capacity(members.len());
    let mut verified = 0;
    let mut mismatched = 0;
    for (pos, &orig) in members.iter().enumerate() {
        let (time, ranks) = match (bc.completed_at[orig], stats.completion_slot[pos]) {
            (Some(at), _) => (Some((at + 1) as f64 * tp), bc.ranks_at_completion[orig].clone()),
            (None, Some(s)) => (Some(t1 + s as f64 * slot), stats.ranks_at_completion[pos].clone()),
            (None, None) => (None, None),
        };
        completion_time.push(time);
        overhead.push(ranks.as_ref().map(|r| (r.iter().sum::<usize>() as f64 - f) / f));
        final_ranks.push(ranks);
        if states[pos].is_complete() {
            match states[pos].recover_file()? {
                Some(got) if got == file => verified += 1,
                _ => mismatched += 1,
            }
        }
    }

    let lp_bound = analysis::lp_lower_bound(&LpInstance {
        file_packets: cfg.file_packets,
        y_sums: members.iter().map(|&i| received[i] as f64).collect(),
        phat: sub_profile.v2v_matrix().to_vec(),
    })
    .ok()
    .map(|s| s.objective);

    let mut events: Vec<Vec<f64>> = Vec::with_capacity(members.len());
    for (pos, &orig) in members.iter().enumerate() {
        let mut ev: Vec<f64> = sub_ledger
            .packet_indices(pos)
            .into_iter()
            .map(|p| p as f64 * tp)
            .collect();
        ev.extend(stats.accepted_slots[pos].iter().map(|&s| t1 + s as f64 * slot));
        let _ = orig;
        events.push(ev);
    }
    let download_rate = mean_rate(&events, t1 + stats.delay);

    let bottleneck_pos = analysis::pick_bottleneck(&sub_profile);
    let bottleneck = Some(members[bottleneck_pos]);
    let bottleneck_ranks = final_ranks[bottleneck_pos].clone();

    Ok(TrialResult {
        trial,
        seed,
        members,
        phase1_duration: t1,
        broadcast_packets: n,
        expected_k,
        received,
        expected_kg,
        group_received,
        transmissions: stats.transmissions,
        phase2_delay: stats.delay,
        completion_time,
        overhead,
        lp_bound,
        exhausted: stats.exhausted,
        stalled: stats.stalled,
        undecodable: stats.undecodable.iter().filter(|&&u| u).count(),
        verified,
        mismatched,
        clamped: design.estimate.clamped,
        bottleneck,
        bottleneck_ranks,
        download_rate,
    })
}

/// Runs a single trial and writes Phase-1 and Phase-2 traces into `dir`.
pub fn run_traced_trial(cfg: &SimConfig, seed: u64, dir: &Path) -> Result<TrialResult, SimError> {
    let design = prepare_design(cfg)?;
    simulate(cfg, &design, seed, 0, 0.0, Some(dir))
}
