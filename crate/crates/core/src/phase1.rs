//! RSU broadcast: who received which coded packets, and the expected
//! reception counts `K_i`, `K_g`.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::channel::{batch_loss_prob, group_loss_prob, sample_reception, LossProfile};
use crate::codec::{BatchCatalog, CodedPacket, DecoderState};

#[derive(Debug, Error)]
pub enum Phase1Error {
    #[error("profile has {profile} packets but {coded} were coded")]
    PacketMismatch { profile: usize, coded: usize },
    #[error("need one RNG per vehicle: got {got}, expected {expected}")]
    RngCount { got: usize, expected: usize },
    #[error("trace output failed: {0}")]
    Trace(#[from] csv::Error),
}

/// Per vehicle and batch, the in-batch offsets (0..M) received from the RSU.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceptionLedger {
    batch_size: usize,
    received: Vec<Vec<Vec<u16>>>,
}

impl ReceptionLedger {
    pub fn empty(vehicles: usize, batches: usize, batch_size: usize) -> Self {
        ReceptionLedger {
            batch_size,
            received: vec![vec![Vec::new(); batches]; vehicles],
        }
    }

    pub fn vehicles(&self) -> usize {
        self.received.len()
    }

    pub fn batches(&self) -> usize {
        self.received.first().map_or(0, Vec::len)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// `N_i^[j]` as in-batch offsets.
    pub fn received(&self, i: usize, j: usize) -> &[u16] {
        &self.received[i][j]
    }

    /// `Y_{i,j}`.
    pub fn count(&self, i: usize, j: usize) -> usize {
        self.received[i][j].len()
    }

    pub fn counts(&self, i: usize) -> Vec<usize> {
        self.received[i].iter().map(Vec::len).collect()
    }

    /// `Σ_j Y_{i,j}`.
    pub fn total(&self, i: usize) -> usize {
        self.received[i].iter().map(Vec::len).sum()
    }

    /// Packets received by at least one of the first `k` vehicles.
    pub fn group_total(&self, k: usize) -> usize {
        let mut seen = vec![false; self.batch_size];
        let mut total = 0;
        for j in 0..self.batches() {
            seen.iter_mut().for_each(|s| *s = false);
            for i in 0..k {
                for &o in &self.received[i][j] {
                    if !seen[o as usize] {
                        seen[o as usize] = true;
                        total += 1;
                    }
                }
            }
        }
        total
    }

    /// Global packet indices received by vehicle `i`, ascending.
    pub fn packet_indices(&self, i: usize) -> Vec<usize> {
        let m = self.batch_size;
        self.received[i]
            .iter()
            .enumerate()
            .flat_map(|(j, offs)| offs.iter().map(move |&o| j * m + o as usize))
            .collect()
    }

    /// Keeps only the listed vehicles, in the given order.
    pub fn restrict(&self, keep: &[usize]) -> ReceptionLedger {
        ReceptionLedger {
            batch_size: self.batch_size,
            received: keep.iter().map(|&i| self.received[i].clone()).collect(),
        }
    }

    fn record(&mut self, i: usize, n: usize) {
        let m = self.batch_size;
        self.received[i][n / m].push((n % m) as u16);
    }
}

fn check_rngs<R>(rngs: &[R], k: usize) -> Result<(), Phase1Error> {
    if rngs.len() != k {
        return Err(Phase1Error::RngCount {
            got: rngs.len(),
            expected: k,
        });
    }
    Ok(())
}

/// Draws every reception without touching payloads. Vehicle `i` uses
/// `rngs[i]`, one Bernoulli draw per packet.
pub fn draw_receptions<R: Rng>(profile: &LossProfile, rngs: &mut [R]) -> Result<ReceptionLedger, Phase1Error> {
    let k = profile.vehicles();
    check_rngs(rngs, k)?;
    let mut ledger = ReceptionLedger::empty(k, profile.batches(), profile.batch_size());
    let n = profile.batches() * profile.batch_size();
    for (i, rng) in rngs.iter_mut().enumerate() {
        let losses = profile.rsu_losses(i);
        for p in 0..n {
            if sample_reception(losses[p], rng) {
                ledger.record(i, p);
            }
        }
    }
    Ok(ledger)
}

/// Outcome of the broadcast phase with real coded packets.
#[derive(Clone, Debug)]
pub struct Broadcast {
    pub ledger: ReceptionLedger,
    pub decoders: Vec<DecoderState>,
    /// RSU packet index at which each vehicle finished decoding, if it did.
    pub completed_at: Vec<Option<usize>>,
    /// Per-batch ranks at the moment of completion.
    pub ranks_at_completion: Vec<Option<Vec<usize>>>,
}

/// Simulates the RSU broadcast: every vehicle independently receives packet
/// `n` with probability `1 - P_{i,n}` and absorbs it into its decoder.
///
/// `packets[j]` holds the `M` coded packets of batch `j`. If `trace` is set,
/// one `(n, j, i, received)` row is written per packet and vehicle.
pub fn run_broadcast<R: Rng, W: Write>(
    profile: &LossProfile,
    catalog: &Arc<BatchCatalog>,
    packets: &[Vec<CodedPacket>],
    rngs: &mut [R],
    mut trace: Option<&mut csv::Writer<W>>,
) -> Result<Broadcast, Phase1Error> {
    let k = profile.vehicles();
    let m = profile.batch_size();
    let n_total = profile.batches() * m;
    let coded: usize = packets.iter().map(Vec::len).sum();
    if coded != n_total || packets.len() != profile.batches() {
        return Err(Phase1Error::PacketMismatch {
            profile: n_total,
            coded,
        });
    }
    check_rngs(rngs, k)?;

    let mut ledger = ReceptionLedger::empty(k, profile.batches(), m);
    let mut decoders: Vec<DecoderState> = (0..k).map(|_| DecoderState::new(Arc::clone(catalog))).collect();
    let mut completed_at = vec![None; k];
    let mut ranks_at_completion = vec![None; k];
    if let Some(w) = trace.as_deref_mut() {
        w.write_record(["n", "j", "i", "received"])?;
    }
    for n in 0..n_total {
        let (j, o) = (n / m, n % m);
        for i in 0..k {
            let got = sample_reception(profile.packet_loss(i, n), &mut rngs[i]);
            if let Some(w) = trace.as_deref_mut() {
                w.write_record([
                    n.to_string(),
                    j.to_string(),
                    i.to_string(),
                    u8::from(got).to_string(),
                ])?;
            }
            if !got {
                continue;
            }
            ledger.record(i, n);
            let dec = &mut decoders[i];
            if dec.absorb(packets[j][o].clone()) && completed_at[i].is_none() && dec.is_complete() {
                completed_at[i] = Some(n);
                ranks_at_completion[i] = Some(dec.ranks());
            }
        }
    }
    if let Some(w) = trace {
        w.flush().map_err(csv::Error::from)?;
    }
    Ok(Broadcast {
        ledger,
        decoders,
        completed_at,
        ranks_at_completion,
    })
}

/// `(K_i^[j] for every j, K_i)` with `K_i^[j] = M (1 - P_i^[j])`.
pub fn expected_individual(profile: &LossProfile, i: usize) -> (Vec<f64>, f64) {
    let m = profile.batch_size() as f64;
    let per: Vec<f64> = (0..profile.batches())
        .map(|j| m * (1.0 - batch_loss_prob(j, i, profile).expect("indices in range")))
        .collect();
    let total = per.iter().sum();
    (per, total)
}

/// `(K_g^[j] for every j, K_g)` over the first `k` vehicles.
pub fn expected_group(profile: &LossProfile, k: usize) -> (Vec<f64>, f64) {
    let m = profile.batch_size() as f64;
    let per: Vec<f64> = (0..profile.batches())
        .map(|j| m * (1.0 - group_loss_prob(j, profile, k).expect("indices in range")))
        .collect();
    let total = per.iter().sum();
    (per, total)
}

/// Events per second over consecutive windows: `(window start, rate)`.
pub fn rate_series(event_times: &[f64], window: f64, horizon: f64) -> Vec<(f64, f64)> {
    if !(window > 0.0) || !(horizon > 0.0) {
        return Vec::new();
    }
    let bins = (horizon / window).ceil() as usize;
    let mut counts = vec![0usize; bins];
    for &t in event_times {
        if t >= 0.0 && t < horizon {
            counts[((t / window) as usize).min(bins - 1)] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b as f64 * window, c as f64 / window))
        .collect()
}
