//! Block RLNC reference scheme: the file is cut into `F / M` disjoint
//! blocks, the RSU cycles through them sending `M + 1` random combinations
//! each, and in sharing the vehicle with the largest rank surplus over its
//! peers recodes its best block.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{mean_rate, Purpose, SimConfig, SimError, Streams, TrialResult};
use crate::analysis::{self, LpInstance};
use crate::channel::sample_reception;
use crate::codec::{combine, emit_batch_packets, Batch, BatchCatalog, CodedPacket, DecoderState, SourceFile};
use crate::galois::Matrix;
use crate::phase1;
use crate::phase2::{contend, union_ranks};
use crate::scenario;

/// One baseline trial with the same group, channel and reception draws as
/// the BATS trial of the same seed.
pub fn baseline_block_rlnc(cfg: &SimConfig, seed: u64) -> Result<TrialResult, SimError> {
    baseline_trial(cfg, seed, 0)
}

fn random_weights(m: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    loop {
        let w: Vec<u8> = (0..m).map(|_| rng.gen()).collect();
        if w.iter().any(|&x| x != 0) {
            return w;
        }
    }
}

/// Rank surplus of `i` over the still-active peers in block `b`.
fn surplus(i: usize, b: usize, ranks: &[Vec<usize>], active: &[bool]) -> usize {
    (0..ranks.len())
        .filter(|&q| q != i && active[q])
        .map(|q| ranks[i][b].saturating_sub(ranks[q][b]))
        .sum()
}

pub fn baseline_trial(cfg: &SimConfig, seed: u64, trial: u64) -> Result<TrialResult, SimError> {
    let m = cfg.batch_size;
    let f = cfg.file_packets;
    if f % m != 0 {
        return Err(SimError::NotDivisible {
            file_packets: f,
            batch_size: m,
        });
    }
    let blocks = f / m;
    let streams = Streams::new(seed, trial);
    let k = cfg.group.k;
    let traj = scenario::build_group(&cfg.group, &cfg.geometry, &mut streams.rng(Purpose::Geometry, 0))?;
    let tp = cfg.packet_time();
    let (n_total, jn) = scenario::broadcast_budget(&traj, tp, m);
    if jn == 0 {
        return Err(SimError::NoBroadcast);
    }
    let profile = scenario::loss_profile(&traj, &cfg.channel, tp, n_total, m)?;
    let file = SourceFile::random(f, cfg.payload_bytes.max(1), &mut streams.rng(Purpose::File, 0));

    let batches: Vec<Batch> = (0..blocks)
        .map(|b| Batch {
            index: b as u32,
            contributors: (b * m..(b + 1) * m).map(|s| s as u32).collect(),
            generator: Matrix::identity(m),
        })
        .collect();
    let units: Vec<Vec<CodedPacket>> = batches.iter().map(|b| emit_batch_packets(&file, b)).collect();
    let catalog = Arc::new(BatchCatalog::new(f, m, batches));

    // Phase 1: blocks in turn, M + 1 combinations each, cycling.
    let mut coder = streams.rng(Purpose::Baseline, 0);
    let mut rx_rngs: Vec<ChaCha8Rng> = (0..k).map(|i| streams.rng(Purpose::Reception, i)).collect();
    let mut states: Vec<DecoderState> = (0..k).map(|_| DecoderState::new(Arc::clone(&catalog))).collect();
    let mut received = vec![0usize; k];
    let mut heard = vec![false; n_total];
    let mut events: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut p1_done: Vec<Option<(usize, Vec<usize>)>> = vec![None; k];
    for n in 0..n_total {
        let b = (n / (m + 1)) % blocks;
        let packet = combine(&units[b], &random_weights(m, &mut coder));
        for i in 0..k {
            if !sample_reception(profile.packet_loss(i, n), &mut rx_rngs[i]) {
                continue;
            }
            received[i] += 1;
            heard[n] = true;
            events[i].push(n as f64 * tp);
            if states[i].absorb(packet.clone()) && p1_done[i].is_none() && states[i].is_complete() {
                p1_done[i] = Some((n, states[i].ranks()));
            }
        }
    }
    drop(units);

    // Phase 2.
    let v2v = cfg.v2v_packet_time();
    let slot_time = cfg.baseline_backoff_max + v2v;
    let max_slots = (cfg.max_slot_factor * f as f64) as usize;
    let phat = profile.v2v_matrix();
    let (union, _) = union_ranks(&states);
    let mut ranks: Vec<Vec<usize>> = states.iter().map(DecoderState::ranks).collect();
    let is_done = |r: &[usize], s: &DecoderState| s.is_complete() || r.iter().zip(&union).all(|(a, u)| a == u);
    let mut active: Vec<bool> = (0..k).map(|i| !is_done(&ranks[i], &states[i])).collect();
    let mut p2_done: Vec<Option<(usize, Vec<usize>)>> = vec![None; k];
    let mut util: Vec<Vec<usize>> = (0..k)
        .map(|i| (0..blocks).map(|b| surplus(i, b, &ranks, &active)).collect())
        .collect();
    let mut sharing = streams.rng(Purpose::Sharing, 0);
    let mut slot = 0usize;
    let mut stalled = false;
    while active.iter().any(|&a| a) {
        if slot >= max_slots {
            stalled = true;
            break;
        }
        let best: Vec<(usize, usize)> = util
            .iter()
            .map(|u| {
                u.iter()
                    .enumerate()
                    .fold((0, 0), |acc, (b, &x)| if x > acc.1 { (b, x) } else { acc })
            })
            .collect();
        let mut candidates: Vec<usize> = (0..k).filter(|&i| best[i].1 > 0).collect();
        let fallback = candidates.is_empty();
        if fallback {
            // No rank surplus anywhere: anyone holding part of a block some
            // active peer still misses may send it.
            candidates = (0..k)
                .filter(|&i| (0..blocks).any(|b| ranks[i][b] > 0 && (0..k).any(|q| active[q] && ranks[q][b] < union[b])))
                .collect();
            if candidates.is_empty() {
                break;
            }
        }
        let tx = contend(&candidates, cfg.baseline_backoff_max, &mut sharing);
        let block = if fallback {
            let options: Vec<usize> = (0..blocks)
                .filter(|&b| ranks[tx][b] > 0 && (0..k).any(|q| active[q] && ranks[q][b] < union[b]))
                .collect();
            options[sharing.gen_range(0..options.len())]
        } else {
            best[tx].0
        };
        slot += 1;
        let packet = states[tx]
            .recode(block as u32, &mut sharing)
            .expect("transmitter holds packets of the block");
        let mut newly_done = false;
        for rx in 0..k {
            if rx == tx || !active[rx] || !sample_reception(phat[tx][rx], &mut sharing) {
                continue;
            }
            if !states[rx].absorb(packet.clone()) {
                continue;
            }
            ranks[rx][block] += 1;
            events[rx].push(traj.phase1_duration() + slot as f64 * slot_time);
            if is_done(&ranks[rx], &states[rx]) {
                active[rx] = false;
                newly_done = true;
                if states[rx].is_complete() {
                    p2_done[rx] = Some((slot, ranks[rx].clone()));
                }
            }
        }
        if newly_done {
            for (i, u) in util.iter_mut().enumerate() {
                for (b, x) in u.iter_mut().enumerate() {
                    *x = surplus(i, b, &ranks, &active);
                }
            }
        } else {
            for (i, u) in util.iter_mut().enumerate() {
                u[block] = surplus(i, block, &ranks, &active);
            }
        }
    }

    let t1 = traj.phase1_duration();
    let mut completion_time = Vec::with_capacity(k);
    let mut overhead = Vec::with_capacity(k);
    let (mut verified, mut mismatched, mut undecodable) = (0, 0, 0);
    for i in 0..k {
        let (time, r) = match (&p1_done[i], &p2_done[i]) {
            (Some((n, r)), _) => (Some((n + 1) as f64 * tp), Some(r)),
            (None, Some((s, r))) => (Some(t1 + *s as f64 * slot_time), Some(r)),
            _ => (None, None),
        };
        completion_time.push(time);
        overhead.push(r.map(|r| (r.iter().sum::<usize>() as f64 - f as f64) / f as f64));
        if states[i].is_complete() {
            match states[i].recover_file()? {
                Some(got) if got == file => verified += 1,
                _ => mismatched += 1,
            }
        } else {
            undecodable += 1;
        }
    }
    let lp_bound = analysis::lp_lower_bound(&LpInstance {
        file_packets: f,
        y_sums: received.iter().map(|&y| y as f64).collect(),
        phat: phat.to_vec(),
    })
    .ok()
    .map(|s| s.objective);
    let delay = slot as f64 * slot_time;
    let download_rate = mean_rate(&events, t1 + delay);

    Ok(TrialResult {
        trial,
        seed,
        members: (0..k).collect(),
        phase1_duration: t1,
        broadcast_packets: n_total,
        expected_k: (0..k).map(|i| phase1::expected_individual(&profile, i).1).collect(),
        received,
        expected_kg: phase1::expected_group(&profile, k).1,
        group_received: heard.iter().filter(|&&h| h).count(),
        transmissions: slot,
        phase2_delay: delay,
        completion_time,
        overhead,
        lp_bound,
        exhausted: false,
        stalled,
        undecodable,
        verified,
        mismatched,
        clamped: 0,
        bottleneck: None,
        bottleneck_ranks: None,
        download_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.file_packets = 320;
        cfg.payload_bytes = 8;
        cfg.group.k = 3;
        cfg.group.v_mean = 120.0;
        cfg
    }

    #[test]
    fn baseline_decodes_and_verifies() {
        let r = baseline_block_rlnc(&small(), 3).unwrap();
        assert_eq!(r.mismatched, 0);
        assert_eq!(r.verified + r.undecodable, 3);
        assert!(r.transmissions <= (20.0 * 320.0) as usize);
    }

    #[test]
    fn rejects_indivisible_file() {
        let mut cfg = small();
        cfg.file_packets = 321;
        assert!(matches!(
            baseline_block_rlnc(&cfg, 1),
            Err(SimError::NotDivisible { .. })
        ));
    }

    #[test]
    fn deterministic() {
        let cfg = small();
        assert_eq!(baseline_block_rlnc(&cfg, 9).unwrap(), baseline_block_rlnc(&cfg, 9).unwrap());
    }
}
