//! V2V cooperative sharing: per-vehicle utilities, the static transmission
//! schedule built from them, and the contention-based sharing loop.

use std::cmp::Ordering;
use std::sync::Arc;

use rand::Rng;

use crate::channel::{batch_loss_prob, sample_reception, LossProfile};
use crate::codec::{CodedPacket, DecoderState};
use crate::phase1::ReceptionLedger;

/// Scale applied to utilities before the tie-breaking jitter.
pub const KAPPA: f64 = 1e6;
/// Jitter is drawn from the open interval `(0, JITTER_MAX)`.
pub const JITTER_MAX: f64 = 10.0;

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for k in 1..n {
        row[k] = row[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    row
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let c = binomial_row(n);
    (0..=n)
        .map(|y| c[y] * p.powi(y as i32) * (1.0 - p).powi((n - y) as i32))
        .collect()
}

#[allow(non_snake_case)]
/// `Pr(y | Y)`: probability that `y` of the `Y` packets vehicle i holds were
/// lost at the peer, whose mean batch loss is `p_peer`.
pub fn pr_y_given_Y(y: usize, count: usize, p_peer: f64, batch_size: usize) -> f64 {
    if y > count || y > batch_size {
        return 0.0;
    }
    binomial_pmf(count, p_peer)[y]
}

/// `(Pr(E1), Pr(E2))` after `t` earlier transmissions of the batch.
pub fn event_probs(t: usize, count: usize, p_peer: f64, phat: f64, batch_size: usize) -> (f64, f64) {
    let c_t = binomial_row(t);
    let mut e1 = 0.0;
    for y in 1..=t {
        let py = pr_y_given_Y(y, count, p_peer, batch_size);
        if py == 0.0 {
            continue;
        }
        let inner: f64 = (0..y)
            .map(|l| c_t[l] * (1.0 - phat).powi(l as i32) * phat.powi((t - l) as i32))
            .sum();
        e1 += py * inner;
    }
    let e2 = (t + 1..=batch_size)
        .map(|y| pr_y_given_Y(y, count, p_peer, batch_size))
        .sum();
    (e1, e2)
}

/// `Pr(E_{i→q}^[j] | t)`, clamped to `[0, 1]`.
pub fn pr_innovative(t: usize, count: usize, p_peer: f64, phat: f64, batch_size: usize) -> f64 {
    let (e1, e2) = event_probs(t, count, p_peer, phat, batch_size);
    (e1 + e2).clamp(0.0, 1.0)
}

/// What a vehicle knows when it plans: its own receptions, the group's RSU
/// loss profile and the V2V loss matrix.
pub struct UtilityInputs<'a> {
    pub ledger: &'a ReceptionLedger,
    pub profile: &'a LossProfile,
    /// `batch_loss[q][j] = P_q^[j]`.
    batch_loss: Vec<Vec<f64>>,
}

impl<'a> UtilityInputs<'a> {
    pub fn new(ledger: &'a ReceptionLedger, profile: &'a LossProfile) -> Self {
        let batch_loss = (0..profile.vehicles())
            .map(|q| {
                (0..profile.batches())
                    .map(|j| batch_loss_prob(j, q, profile).expect("indices in range"))
                    .collect()
            })
            .collect();
        UtilityInputs {
            ledger,
            profile,
            batch_loss,
        }
    }

    pub fn vehicles(&self) -> usize {
        self.profile.vehicles()
    }

    pub fn batch_loss(&self, q: usize, j: usize) -> f64 {
        self.batch_loss[q][j]
    }

    /// `Ū(i, [j], t+1)` straight from the per-peer event probabilities.
    pub fn mean_utility(&self, i: usize, j: usize, t: usize) -> f64 {
        let m = self.profile.batch_size();
        let y = self.ledger.count(i, j);
        (0..self.vehicles())
            .filter(|&q| q != i)
            .map(|q| pr_innovative(t, y, self.batch_loss[q][j], self.profile.v2v_loss(i, q), m))
            .sum()
    }
}

/// `U(i, [j], t+1) = κ Ū + ε` for `t_next = t + 1 ∈ 1..=M`.
pub fn total_utility<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    t_next: usize,
    inputs: &UtilityInputs,
    rng: &mut R,
) -> f64 {
    KAPPA * inputs.mean_utility(i, j, t_next - 1) + jitter(rng)
}

fn jitter<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let e = rng.gen_range(0.0..JITTER_MAX);
        if e > 0.0 {
            return e;
        }
    }
}

/// `Ū(i, [j], t+1)` for every batch and `t = 0..M-1`, row-major by batch.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityTable {
    batch_size: usize,
    values: Vec<f64>,
}

impl UtilityTable {
    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.values[j * self.batch_size + t]
    }

    pub fn batches(&self) -> usize {
        self.values.len() / self.batch_size
    }
}

/// Builds the whole table for vehicle `i`. The inner binomial sum of
/// `Pr(E1)` depends only on `P̂_{i,q}`, so it is tabulated once per peer.
pub fn utility_table(i: usize, inputs: &UtilityInputs) -> UtilityTable {
    let m = inputs.profile.batch_size();
    let k = inputs.vehicles();
    let jn = inputs.profile.batches();
    // tails[q][t][y] = Σ_{l<y} C(t,l) (1-P̂)^l P̂^(t-l)
    let tails: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|q| {
            let phat = inputs.profile.v2v_loss(i, q);
            (0..m)
                .map(|t| {
                    let pmf = binomial_pmf(t, 1.0 - phat);
                    let mut acc = 0.0;
                    let mut row = vec![0.0; m + 1];
                    for y in 1..=m {
                        if y - 1 <= t {
                            acc += pmf[y - 1];
                        }
                        row[y] = acc;
                    }
                    row
                })
                .collect()
        })
        .collect();

    let mut values = vec![0.0; jn * m];
    for j in 0..jn {
        let count = inputs.ledger.count(i, j);
        if count == 0 {
            continue;
        }
        let row = &mut values[j * m..(j + 1) * m];
        for q in (0..k).filter(|&q| q != i) {
            let pmf = binomial_pmf(count, inputs.batch_loss[q][j]);
            // suffix[y] = Σ_{y' >= y} pmf[y']
            let mut suffix = vec![0.0; count + 2];
            for y in (0..=count).rev() {
                suffix[y] = suffix[y + 1] + pmf[y];
            }
            for (t, slot) in row.iter_mut().enumerate() {
                let e1: f64 = (1..=t.min(count)).map(|y| pmf[y] * tails[q][t][y]).sum();
                let e2 = if t + 1 <= count { suffix[t + 1] } else { 0.0 };
                *slot += (e1 + e2).clamp(0.0, 1.0);
            }
        }
    }
    UtilityTable {
        batch_size: m,
        values,
    }
}

/// `R_i`: batch indices in descending order of `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionSchedule {
    pub entries: Vec<u32>,
    /// The `U` value behind each entry, same order.
    pub utilities: Vec<f64>,
}

impl TransmissionSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sorts the `J·M` utilities of vehicle `i` (each with fresh jitter).
pub fn build_schedule<R: Rng + ?Sized>(i: usize, inputs: &UtilityInputs, rng: &mut R) -> TransmissionSchedule {
    schedule_from_table(&utility_table(i, inputs), rng)
}

pub fn schedule_from_table<R: Rng + ?Sized>(table: &UtilityTable, rng: &mut R) -> TransmissionSchedule {
    let m = table.batch_size;
    let mut scored: Vec<(f64, u32)> = table
        .values
        .iter()
        .enumerate()
        .map(|(idx, &u)| (KAPPA * u + jitter(rng), (idx / m) as u32))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    TransmissionSchedule {
        entries: scored.iter().map(|s| s.1).collect(),
        utilities: scored.iter().map(|s| s.0).collect(),
    }
}

/// Slot timing of the sharing phase.
#[derive(Clone, Debug, PartialEq)]
pub struct SharingTiming {
    /// Largest random backoff, seconds.
    pub backoff_max: f64,
    /// Airtime of one V2V packet, seconds.
    pub packet_time: f64,
    /// Hard stop; reaching it marks the run as stalled.
    pub max_slots: usize,
}

impl SharingTiming {
    pub fn slot(&self) -> f64 {
        self.backoff_max + self.packet_time
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub tx: usize,
    pub batch: u32,
    /// Per vehicle: did it accept the packet as innovative.
    pub accepted: Vec<bool>,
}

#[derive(Clone, Debug, Default)]
pub struct SharingStats {
    pub transmissions: usize,
    pub delay: f64,
    /// Slot (1-based) after which each vehicle could decode; 0 if it already
    /// could when sharing began.
    pub completion_slot: Vec<Option<usize>>,
    pub ranks_at_completion: Vec<Option<Vec<usize>>>,
    pub rank_at_completion: Vec<Option<usize>>,
    /// A vehicle ran past the end of its schedule and cycled.
    pub exhausted: bool,
    pub exhausted_vehicles: Vec<bool>,
    /// The slot cap was hit.
    pub stalled: bool,
    /// Vehicles that hold everything the group holds and still cannot decode.
    pub undecodable: Vec<bool>,
    /// Slots at which each vehicle accepted an innovative packet.
    pub accepted_slots: Vec<Vec<usize>>,
    pub per_vehicle_transmissions: Vec<usize>,
    pub trace: Vec<SlotRecord>,
}

impl SharingStats {
    pub fn all_complete(&self) -> bool {
        self.completion_slot.iter().all(Option::is_some)
    }

    pub fn last_completion(&self) -> Option<usize> {
        self.completion_slot.iter().copied().collect::<Option<Vec<_>>>()?.into_iter().max()
    }
}

/// Per-batch ranks of everything the group holds, and whether that union
/// is decodable.
pub(crate) fn union_ranks(states: &[DecoderState]) -> (Vec<usize>, bool) {
    let Some(first) = states.first() else {
        return (Vec::new(), true);
    };
    let catalog = Arc::clone(first.catalog());
    let mut union = DecoderState::new(catalog);
    for s in states {
        for j in 0..s.catalog().len() as u32 {
            for p in s.stored(j) {
                union.absorb(CodedPacket {
                    batch: p.batch,
                    coeff: p.coeff.clone(),
                    payload: Vec::new(),
                });
            }
        }
    }
    let complete = union.is_complete();
    (union.ranks(), complete)
}

/// Draws the winning vehicle: uniform backoffs, ties redrawn among the tied.
pub(crate) fn contend<R: Rng + ?Sized>(candidates: &[usize], backoff_max: f64, rng: &mut R) -> usize {
    let mut pool = candidates.to_vec();
    loop {
        if pool.len() == 1 {
            return pool[0];
        }
        let draws: Vec<f64> = pool.iter().map(|_| rng.gen::<f64>() * backoff_max).collect();
        let best = draws.iter().copied().fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = pool
            .iter()
            .zip(&draws)
            .filter(|(_, &d)| d == best)
            .map(|(&v, _)| v)
            .collect();
        if tied.len() == 1 {
            return tied[0];
        }
        pool = tied;
    }
}

/// Runs the sharing loop until every vehicle can decode or holds all the
/// group has. Each slot, every vehicle with something to send contends; the
/// winner recodes the next batch of its schedule (skipping batches it holds
/// nothing of, cycling when the schedule runs out) and each other vehicle
/// that still needs packets receives it with probability `1 - P̂`.
pub fn run_sharing<R: Rng + ?Sized>(
    states: &mut [DecoderState],
    schedules: &[TransmissionSchedule],
    phat: &[Vec<f64>],
    timing: &SharingTiming,
    rng: &mut R,
    record_trace: bool,
) -> SharingStats {
    let k = states.len();
    assert_eq!(schedules.len(), k, "one schedule per vehicle");
    let (union, union_complete) = union_ranks(states);
    let mut deficit: Vec<usize> = states
        .iter()
        .map(|s| union.iter().zip(s.ranks()).map(|(u, r)| u - r).sum())
        .collect();

    let mut stats = SharingStats {
        completion_slot: vec![None; k],
        ranks_at_completion: vec![None; k],
        rank_at_completion: vec![None; k],
        exhausted_vehicles: vec![false; k],
        undecodable: vec![false; k],
        accepted_slots: vec![Vec::new(); k],
        per_vehicle_transmissions: vec![0; k],
        ..SharingStats::default()
    };
    let mut done = vec![false; k];
    for (i, s) in states.iter().enumerate() {
        if s.is_complete() {
            stats.completion_slot[i] = Some(0);
            stats.ranks_at_completion[i] = Some(s.ranks());
            stats.rank_at_completion[i] = Some(s.total_rank());
            done[i] = true;
        } else if deficit[i] == 0 {
            done[i] = true;
        }
    }
    let can_send: Vec<bool> = states.iter().map(|s| s.total_rank() > 0).collect();
    let mut cursor = vec![0usize; k];
    let mut slot = 0usize;

    while done.iter().any(|d| !d) {
        if slot >= timing.max_slots {
            stats.stalled = true;
            break;
        }
        let candidates: Vec<usize> = (0..k).filter(|&i| can_send[i]).collect();
        if candidates.is_empty() {
            break;
        }
        let tx = contend(&candidates, timing.backoff_max, rng);
        let sched = &schedules[tx].entries;
        let mut steps = 0;
        let batch = loop {
            if cursor[tx] >= sched.len() {
                cursor[tx] = 0;
                stats.exhausted = true;
                stats.exhausted_vehicles[tx] = true;
            }
            let j = sched[cursor[tx]];
            cursor[tx] += 1;
            steps += 1;
            if states[tx].batch_rank(j) > 0 {
                break Some(j);
            }
            if steps > sched.len() {
                break None;
            }
        };
        let Some(batch) = batch else {
            break;
        };
        slot += 1;
        stats.per_vehicle_transmissions[tx] += 1;
        let packet = states[tx]
            .recode(batch, rng)
            .expect("transmitter holds packets of the batch");
        let mut accepted = vec![false; k];
        for rx in 0..k {
            if rx == tx || done[rx] {
                continue;
            }
            if !sample_reception(phat[tx][rx], rng) {
                continue;
            }
            if !states[rx].absorb(packet.clone()) {
                continue;
            }
            accepted[rx] = true;
            deficit[rx] -= 1;
            stats.accepted_slots[rx].push(slot);
            if states[rx].is_complete() {
                stats.completion_slot[rx] = Some(slot);
                stats.ranks_at_completion[rx] = Some(states[rx].ranks());
                stats.rank_at_completion[rx] = Some(states[rx].total_rank());
                done[rx] = true;
            } else if deficit[rx] == 0 {
                done[rx] = true;
            }
        }
        if record_trace {
            stats.trace.push(SlotRecord {
                slot,
                tx,
                batch,
                accepted,
            });
        }
    }
    for i in 0..k {
        stats.undecodable[i] = stats.completion_slot[i].is_none() && (!union_complete || deficit[i] == 0);
    }
    stats.transmissions = slot;
    stats.delay = slot as f64 * timing.slot();
    stats
}

/// Writes a per-slot trace: `slot, tx, batch, accept bits` (one 0/1 char per
/// vehicle).
pub fn write_trace<W: std::io::Write>(trace: &[SlotRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "tx", "batch", "accepted"])?;
    for r in trace {
        let bits: String = r.accepted.iter().map(|&a| if a { '1' } else { '0' }).collect();
        w.write_record([r.slot.to_string(), r.tx.to_string(), r.batch.to_string(), bits])?;
    }
    w.flush()?;
    Ok(())
}

/// Orders vehicles by completion, putting the ones that never completed last.
pub fn completion_order(stats: &SharingStats) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..stats.completion_slot.len()).collect();
    idx.sort_by(|&a, &b| match (stats.completion_slot[a], stats.completion_slot[b]) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{BatchCatalog, DegreeDistribution, SourceFile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pr_y_cases() {
        assert_eq!(pr_y_given_Y(4, 3, 0.5, 16), 0.0);
        assert_eq!(pr_y_given_Y(0, 5, 0.0, 16), 1.0);
        assert_eq!(pr_y_given_Y(2, 5, 0.0, 16), 0.0);
        // enumerate the 2^3 patterns of which packets the peer lost
        let brute = (0u32..8).filter(|m| m.count_ones() == 1).count() as f64 / 8.0;
        assert!((pr_y_given_Y(1, 3, 0.5, 16) - brute).abs() < 1e-15);
        assert!((brute - 0.375).abs() < 1e-15);
    }

    #[test]
    fn event_prob_boundaries() {
        let (e1, e2) = event_probs(0, 7, 0.3, 0.2, 16);
        assert_eq!(e1, 0.0);
        assert!((e2 - (1.0 - pr_y_given_Y(0, 7, 0.3, 16))).abs() < 1e-15);
        for t in 1..16 {
            assert_eq!(event_probs(t, 10, 0.4, 0.0, 16).0, 0.0);
        }
        assert!((event_probs(0, 16, 1.0, 0.3, 16).1 - 1.0).abs() < 1e-15);
        assert!((pr_innovative(0, 16, 1.0, 0.3, 16) - 1.0).abs() < 1e-15);
        for t in 0..16 {
            assert_eq!(pr_innovative(t, 0, 0.5, 0.1, 16), 0.0);
        }
    }

    #[test]
    fn pr_innovative_nonincreasing_in_t() {
        for &count in &[1usize, 5, 16] {
            for &p in &[0.05, 0.3, 0.9] {
                for &ph in &[0.0, 0.1, 0.5] {
                    let v: Vec<f64> = (0..16).map(|t| pr_innovative(t, count, p, ph, 16)).collect();
                    assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{count} {p} {ph} {v:?}");
                }
            }
        }
    }

    fn toy_inputs(k: usize, jn: usize, m: usize, seed: u64) -> (ReceptionLedger, LossProfile) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p_in: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..jn * m).map(|_| rng.gen_range(0.0..0.8)).collect())
            .collect();
        let mut phat = vec![vec![0.0; k]; k];
        for i in 0..k {
            for q in i + 1..k {
                let v = rng.gen_range(0.0..0.5);
                phat[i][q] = v;
                phat[q][i] = v;
            }
        }
        let prof = LossProfile::new(m, p_in, phat).unwrap();
        let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|i| ChaCha8Rng::seed_from_u64(seed + i as u64)).collect();
        let ledger = crate::phase1::draw_receptions(&prof, &mut rngs).unwrap();
        (ledger, prof)
    }

    #[test]
    fn fast_table_matches_verbatim_formula() {
        let (ledger, prof) = toy_inputs(4, 6, 8, 11);
        let inputs = UtilityInputs::new(&ledger, &prof);
        for i in 0..4 {
            let table = utility_table(i, &inputs);
            for j in 0..6 {
                for t in 0..8 {
                    let direct = inputs.mean_utility(i, j, t);
                    assert!((table.get(j, t) - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn utility_bounds_and_ordering() {
        let (ledger, prof) = toy_inputs(2, 5, 8, 12);
        let inputs = UtilityInputs::new(&ledger, &prof);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for j in 0..5 {
            for t in 1..=8 {
                let u = total_utility(0, j, t, &inputs, &mut rng);
                assert!(u > 0.0 && u < KAPPA + JITTER_MAX);
            }
        }
        let (ledger, prof) = toy_inputs(5, 10, 16, 13);
        let inputs = UtilityInputs::new(&ledger, &prof);
        for i in 0..5 {
            let table = utility_table(i, &inputs);
            for j in 0..10 {
                for t in 1..16 {
                    assert!(KAPPA * table.get(j, t) <= KAPPA * table.get(j, t - 1) + 1e-5);
                }
            }
        }
    }

    #[test]
    fn fully_served_peers_leave_only_jitter() {
        let k = 3;
        let prof = LossProfile::new(4, vec![vec![0.0; 8]; k], vec![vec![0.1; k]; k]).unwrap();
        let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|i| ChaCha8Rng::seed_from_u64(i as u64)).collect();
        let ledger = crate::phase1::draw_receptions(&prof, &mut rngs).unwrap();
        let inputs = UtilityInputs::new(&ledger, &prof);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 1..=4 {
            assert!(total_utility(1, 0, t, &inputs, &mut rng) < JITTER_MAX);
        }
    }

    #[test]
    fn ideal_condition_gives_k_minus_one() {
        // peers lost everything, V2V lossless
        let k = 4;
        let mut p_in = vec![vec![1.0; 16]; k];
        p_in[0] = vec![0.0; 16];
        let prof = LossProfile::new(16, p_in, vec![vec![0.0; k]; k]).unwrap();
        let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|i| ChaCha8Rng::seed_from_u64(i as u64)).collect();
        let ledger = crate::phase1::draw_receptions(&prof, &mut rngs).unwrap();
        let table = utility_table(0, &UtilityInputs::new(&ledger, &prof));
        for t in 0..16 {
            assert!((table.get(0, t) - (k - 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_contains_every_batch_m_times_in_order() {
        let (ledger, prof) = toy_inputs(4, 7, 8, 14);
        let inputs = UtilityInputs::new(&ledger, &prof);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = build_schedule(2, &inputs, &mut rng);
        assert_eq!(s.len(), 56);
        for j in 0..7u32 {
            assert_eq!(s.entries.iter().filter(|&&e| e == j).count(), 8);
        }
        assert!(s.utilities.windows(2).all(|w| w[0] > w[1]));
    }

    fn lossless_pair(seed: u64) -> (Vec<DecoderState>, Arc<BatchCatalog>, SourceFile) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let file = SourceFile::random(24, 4, &mut rng);
        let psi = DegreeDistribution::point_mass(4).unwrap();
        let (catalog, packets) = BatchCatalog::encode(&file, 20, &psi, 4, &mut rng).unwrap();
        let mut full = DecoderState::new(Arc::clone(&catalog));
        for batch in &packets {
            for p in batch {
                full.absorb(p.clone());
            }
        }
        let empty = DecoderState::new(Arc::clone(&catalog));
        (vec![full, empty], catalog, file)
    }

    #[test]
    fn single_source_transfer_stops_at_decode_point() {
        let timing = SharingTiming {
            backoff_max: 50e-6,
            packet_time: 1e-3,
            max_slots: 10_000,
        };
        for seed in 0..10 {
            let (mut states, catalog, file) = lossless_pair(seed);
            if !states[0].is_complete() || catalog.uncovered() > 0 {
                continue;
            }
            let sched = vec![
                TransmissionSchedule {
                    entries: (0..20).flat_map(|j| std::iter::repeat(j).take(4)).collect(),
                    utilities: vec![0.0; 80],
                },
                TransmissionSchedule {
                    entries: Vec::new(),
                    utilities: Vec::new(),
                },
            ];
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let phat = vec![vec![0.0; 2]; 2];
            let stats = run_sharing(&mut states, &sched, &phat, &timing, &mut rng, true);
            // every packet V_2 hears is innovative until it can decode
            let done = stats.completion_slot[1].unwrap();
            assert_eq!(stats.transmissions, done);
            assert_eq!(states[1].total_rank(), done);
            assert!(stats.trace.iter().all(|r| r.accepted[1]));
            assert_eq!(states[1].recover_file().unwrap().unwrap(), file);
            assert!((stats.delay - done as f64 * timing.slot()).abs() < 1e-12);
        }
    }

    #[test]
    fn nothing_to_do_when_everyone_decoded() {
        let (states, ..) = lossless_pair(1);
        let mut states = vec![states[0].clone(), states[0].clone()];
        let sched = vec![
            TransmissionSchedule {
                entries: vec![0],
                utilities: vec![0.0],
            };
            2
        ];
        let timing = SharingTiming {
            backoff_max: 50e-6,
            packet_time: 1e-3,
            max_slots: 100,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stats = run_sharing(&mut states, &sched, &[vec![0.0; 2], vec![0.0; 2]], &timing, &mut rng, false);
        if states[0].is_complete() {
            assert_eq!(stats.transmissions, 0);
            assert_eq!(stats.completion_slot, vec![Some(0), Some(0)]);
        }
    }

    #[test]
    fn contention_picks_each_vehicle_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut wins = [0usize; 4];
        for _ in 0..40_000 {
            wins[contend(&[0, 1, 2, 3], 50e-6, &mut rng)] += 1;
        }
        let sigma = (40_000.0 * 0.25 * 0.75f64).sqrt();
        assert!(wins.iter().all(|&w| (w as f64 - 10_000.0).abs() < 4.0 * sigma));
    }
}
