//! Independent oracles shared by the formula, decoder and acceptance
//! tests. Each `pub fn` panics with a message when its check fails.

#![allow(dead_code)]

use std::sync::Arc;

use bats_v2x::analysis::{innovative_set_size, intersection_size};
use bats_v2x::channel::{snr_outage_prob, v2v_loss_prob, ChannelParams, LossProfile};
use bats_v2x::codec::{emit_batch_packets, recode, Batch, BatchCatalog, CodedPacket, DecoderState, SourceFile};
use bats_v2x::galois::{EchelonBasis, Matrix};
use bats_v2x::phase2::{event_probs, pr_innovative, pr_y_given_Y};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adaptive Simpson on `[a, b]`.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `∫_0^x t^(m-1) e^(-m t / Ω) dt` with `t = x u^8`, which removes the
/// singularity at zero for `m < 1`.
fn gamma_mass(x: f64, m: f64, omega: f64) -> f64 {
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let t = x * u.powi(8);
        t.powf(m - 1.0) * (-m * t / omega).exp() * x * 8.0 * u.powi(7)
    };
    simpson(&g, 0.0, 1.0, 1e-13)
}

/// Outage probability straight from the fading power density: the mass
/// below the threshold over the total mass.
fn outage_by_quadrature(d: f64, pt_dbm: f64, m: f64, p: &ChannelParams) -> f64 {
    let c = 299_792_458.0;
    let pl0 = 20.0 * (4.0 * std::f64::consts::PI * p.reference_distance * p.carrier_hz / c).log10();
    let pl = if d <= p.critical_distance {
        pl0 + 10.0 * p.beta1 * (d / p.reference_distance).log10()
    } else {
        pl0 + 10.0 * p.beta1 * (p.critical_distance / p.reference_distance).log10()
            + 10.0 * p.beta2 * (d / p.critical_distance).log10()
    };
    let lin = |db: f64| 10f64.powf(db / 10.0);
    let a = lin(p.snr_threshold_db) * lin(p.noise_dbm) / (lin(pt_dbm) * lin(-pl));
    let total_span = 80.0 * p.omega / m;
    gamma_mass(a, m, p.omega) / gamma_mass(total_span, m, p.omega)
}

pub fn rsu_outage_matches_quadrature() {
    let p = ChannelParams::default();
    for &d in &[12.0, 35.0, 60.0, 80.0, 95.0, 150.0, 200.0, 320.0] {
        for &m in &[p.m1, 0.75, 1.0, 2.5] {
            let got = snr_outage_prob(d, p.pt_dbm, m, &p).unwrap();
            let want = outage_by_quadrature(d, p.pt_dbm, m, &p);
            assert!((got - want).abs() < 1e-6, "d={d} m={m}: {got} vs {want}");
        }
    }
}

pub fn outage_unit_shape_is_exponential() {
    let p = ChannelParams::default();
    let d = 140.0;
    let got = snr_outage_prob(d, p.pt_dbm, 1.0, &p).unwrap();
    let a = bats_v2x::channel::outage_threshold(d, p.pt_dbm, &p).unwrap();
    assert!((got - (1.0 - (-a / p.omega).exp())).abs() < 1e-12);
}

pub fn outage_matches_sampled_fading() {
    // Gamma(m, Ω/m) power draws by Marsaglia–Tsang.
    fn gamma_draw(m: f64, rng: &mut ChaCha8Rng) -> f64 {
        if m < 1.0 {
            let u: f64 = rng.gen();
            return gamma_draw(m + 1.0, rng) * u.powf(1.0 / m);
        }
        let d = m - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x: f64 = {
                let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
                (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            };
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u: f64 = rng.gen();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }
    let p = ChannelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let d = 260.0;
    let m = p.m1;
    let a = bats_v2x::channel::outage_threshold(d, p.pt_dbm, &p).unwrap();
    let trials = 200_000;
    let outages = (0..trials)
        .filter(|_| gamma_draw(m, &mut rng) * p.omega / m < a)
        .count();
    let emp = outages as f64 / trials as f64;
    let want = snr_outage_prob(d, p.pt_dbm, m, &p).unwrap();
    let sigma = (want * (1.0 - want) / trials as f64).sqrt();
    assert!((emp - want).abs() < 3.0 * sigma, "{emp} vs {want} (σ={sigma})");
}

pub fn v2v_loss_matches_quadrature() {
    let p = ChannelParams::default();
    for &(d, m) in &[(15.0, 1.2), (30.0, 1.2), (89.0, 1.2), (90.0, 0.75), (120.0, 0.75), (180.0, 0.75)] {
        let got = v2v_loss_prob(d, &p).unwrap();
        let want = outage_by_quadrature(d, p.pt_v2v_dbm, m, &p);
        assert!((got - want).abs() < 1e-6, "S={d}: {got} vs {want}");
    }
    assert!(v2v_loss_prob(89.9, &p).unwrap() < v2v_loss_prob(90.0, &p).unwrap());
}

pub fn reception_pmf_matches_enumeration() {
    for count in 0..=6usize {
        for &p in &[0.0f64, 0.2, 0.5, 0.85, 1.0] {
            let mut mass = vec![0.0; count + 1];
            for pattern in 0u32..(1 << count) {
                let lost = pattern.count_ones() as usize;
                mass[lost] += p.powi(lost as i32) * (1.0 - p).powi((count - lost) as i32);
            }
            for y in 0..=8usize {
                let want = if y <= count { mass[y] } else { 0.0 };
                let got = pr_y_given_Y(y, count, p, 8);
                assert!((got - want).abs() < 1e-12, "y={y} Y={count} p={p}");
            }
        }
    }
    assert!((pr_y_given_Y(1, 3, 0.5, 16) - 0.375).abs() < 1e-15);
}

/// Exact counting model of the `(t+1)`-th transmission: the peer lacks `y`
/// of the sender's `Y` packets, has caught `l` of `t` earlier ones.
pub fn innovation_events_match_counting_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let trials = 60_000;
    for &(t, count, pq, phat) in &[
        (0usize, 5usize, 0.4, 0.3),
        (1, 5, 0.4, 0.3),
        (3, 8, 0.6, 0.2),
        (6, 10, 0.7, 0.5),
        (9, 12, 0.3, 0.1),
        (4, 16, 0.9, 0.0),
        (2, 3, 1.0, 0.6),
    ] {
        let mut e1 = 0usize;
        let mut e2 = 0usize;
        for _ in 0..trials {
            let y = (0..count).filter(|_| rng.gen::<f64>() < pq).count();
            let l = (0..t).filter(|_| rng.gen::<f64>() >= phat).count();
            if y >= t + 1 {
                e2 += 1;
            } else if y >= 1 && l < y {
                e1 += 1;
            }
        }
        let (p1, p2) = event_probs(t, count, pq, phat, 16);
        for (emp, want) in [(e1, p1), (e2, p2)] {
            let emp = emp as f64 / trials as f64;
            let sigma = (want * (1.0 - want) / trials as f64).sqrt().max(1e-9);
            assert!((emp - want).abs() <= 3.0 * sigma, "t={t} Y={count}: {emp} vs {want}");
        }
    }
}

/// The real process in GF(2^8): the sender holds `Y` independent packets,
/// the peer caught each with probability `1 - P_q`, then `t` recoded
/// packets pass the V2V channel; is the next recoded packet innovative?
/// Accidental dependence over GF(2^8) is at most `1/256` per packet.
pub fn innovation_events_match_linear_algebra_process() {
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let m = 16;
    let trials = 20_000;
    for &(t, count, pq, phat) in &[(0usize, 6usize, 0.5, 0.3), (2, 6, 0.5, 0.3), (5, 10, 0.6, 0.4), (8, 12, 0.8, 0.2)] {
        let mut innovative = 0usize;
        for _ in 0..trials {
            let mut peer = EchelonBasis::new(m);
            for k in 0..count {
                if rng.gen::<f64>() >= pq {
                    let mut e = vec![0u8; m];
                    e[k] = 1;
                    peer.insert(&e);
                }
            }
            let recoded = |rng: &mut ChaCha8Rng| {
                let mut v = vec![0u8; m];
                loop {
                    for x in v.iter_mut().take(count) {
                        *x = rng.gen();
                    }
                    if v.iter().any(|&x| x != 0) {
                        return v;
                    }
                }
            };
            for _ in 0..t {
                let v = recoded(&mut rng);
                if rng.gen::<f64>() >= phat {
                    peer.insert(&v);
                }
            }
            if peer.is_independent(&recoded(&mut rng)) {
                innovative += 1;
            }
        }
        let emp = innovative as f64 / trials as f64;
        let want = pr_innovative(t, count, pq, phat, m);
        let sigma = (want * (1.0 - want) / trials as f64).sqrt();
        assert!(
            (emp - want).abs() <= 4.0 * sigma + 1.0 / 256.0,
            "t={t} Y={count}: {emp} vs {want}"
        );
    }
}

fn small_profile(rng: &mut ChaCha8Rng, k: usize, m: usize, batches: usize) -> LossProfile {
    let p_in = (0..k)
        .map(|_| {
            (0..m * batches)
                .map(|_| match rng.gen_range(0..5) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.gen(),
                })
                .collect()
        })
        .collect();
    let phat = (0..k).map(|_| (0..k).map(|_| rng.gen()).collect()).collect();
    LossProfile::new(m, p_in, phat).unwrap()
}

/// Expected size of `N_i ∖ N_q` or `∩_l N_{u_l} ∖ N_b` by
/// enumerating every reception pattern of the vehicles involved.
fn enumerate_expected(profile: &LossProfile, j: usize, holders: &[usize], b: usize) -> f64 {
    let mut vehicles = holders.to_vec();
    vehicles.push(b);
    let mut total = 0.0;
    for n in profile.batch_range(j) {
        for pattern in 0u32..(1 << vehicles.len()) {
            let mut prob = 1.0;
            for (s, &v) in vehicles.iter().enumerate() {
                let got = pattern >> s & 1 == 1;
                let loss = profile.packet_loss(v, n);
                prob *= if got { 1.0 - loss } else { loss };
            }
            let all_hold = (0..holders.len()).all(|s| pattern >> s & 1 == 1);
            let b_missing = pattern >> holders.len() & 1 == 0;
            if all_hold && b_missing {
                total += prob;
            }
        }
    }
    total
}

pub fn pairwise_surplus_matches_enumeration_and_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let profile = small_profile(&mut rng, 4, 4, 3);
    for j in 0..3 {
        for i in 0..4 {
            for q in (0..4).filter(|&q| q != i) {
                let got = innovative_set_size(i, j, q, &profile);
                let want = enumerate_expected(&profile, j, &[i], q);
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
    // Monte Carlo of |N_i ∖ N_q| on one pair.
    let (i, q, j) = (0, 2, 1);
    let trials = 40_000;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..trials {
        let c = profile
            .batch_range(j)
            .filter(|&n| rng.gen::<f64>() >= profile.packet_loss(i, n) && rng.gen::<f64>() < profile.packet_loss(q, n))
            .count() as f64;
        sum += c;
        sq += c * c;
    }
    let mean = sum / trials as f64;
    let sigma = ((sq / trials as f64 - mean * mean) / trials as f64).sqrt().max(1e-9);
    let want = innovative_set_size(i, j, q, &profile);
    assert!((mean - want).abs() <= 3.0 * sigma, "{mean} vs {want}");
}

pub fn intersection_surplus_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let k = 5;
    let profile = small_profile(&mut rng, k, 3, 2);
    let b = 2;
    let peers: Vec<usize> = (0..k).filter(|&q| q != b).collect();
    for mask in 1u32..(1 << peers.len()) {
        let chosen: Vec<usize> = (0..peers.len()).filter(|s| mask >> s & 1 == 1).map(|s| peers[s]).collect();
        if chosen.len() < 2 {
            continue;
        }
        for j in 0..2 {
            let got = intersection_size(&chosen, j, b, &profile);
            let want = enumerate_expected(&profile, j, &chosen, b);
            assert!((got - want).abs() < 1e-12, "{chosen:?} j={j}");
        }
    }
}

struct Instance {
    file: SourceFile,
    catalog: Arc<BatchCatalog>,
    packets: Vec<CodedPacket>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let f = rng.gen_range(1..=64);
    let m = rng.gen_range(1..=6);
    let len = rng.gen_range(1..=4);
    let file = SourceFile::random(f, len, rng);
    let j = rng.gen_range(1..=(2 * f / m + 3));
    let batches: Vec<Batch> = (0..j)
        .map(|b| {
            let d = rng.gen_range(1..=f.min(10));
            let contributors = rand::seq::index::sample(rng, f, d)
                .into_iter()
                .map(|s| s as u32)
                .collect();
            Batch {
                index: b as u32,
                contributors,
                generator: Matrix::random(d, m, rng),
            }
        })
        .collect();
    let mut packets = Vec::new();
    for b in &batches {
        let full = emit_batch_packets(&file, b);
        // Some batches arrive as plain basis packets, some as recoded
        // combinations of a random subset (possibly dependent).
        if rng.gen_bool(0.5) {
            packets.extend(full.into_iter().filter(|_| rng.gen_bool(0.7)));
        } else {
            let keep: Vec<CodedPacket> = full.into_iter().filter(|_| rng.gen_bool(0.8)).collect();
            if !keep.is_empty() {
                for _ in 0..rng.gen_range(0..=m + 1) {
                    packets.push(recode(&keep, rng).unwrap());
                }
            }
        }
    }
    Instance {
        file,
        catalog: Arc::new(BatchCatalog::new(f, m, batches)),
        packets,
    }
}

/// Sources fixed by the stacked system, with their values.
fn stacked_solution(inst: &Instance) -> Vec<Option<Vec<u8>>> {
    let f = inst.file.len();
    let len = inst.file.packet_len();
    let mut system = Matrix::zeros(0, f + len);
    for p in &inst.packets {
        let batch = inst.catalog.batch(p.batch).unwrap();
        let e = batch.contributor_coefficients(&p.coeff);
        let mut row = vec![0u8; f + len];
        for (pos, &s) in batch.contributors.iter().enumerate() {
            row[s as usize] ^= e[pos];
        }
        row[f..].copy_from_slice(&p.payload);
        system.push_row(&row);
    }
    let (reduced, pivots) = system.row_reduce();
    let mut out = vec![None; f];
    for (r, &c) in pivots.iter().enumerate() {
        if c >= f {
            continue;
        }
        let row = reduced.row(r);
        let isolated = (0..f).all(|x| x == c || row[x] == 0);
        if isolated {
            out[c] = Some(row[f..].to_vec());
        }
    }
    out
}

fn decode(inst: &Instance, order: &[usize]) -> (Vec<u32>, DecoderState) {
    let mut st = DecoderState::new(Arc::clone(&inst.catalog));
    for &i in order {
        st.absorb(inst.packets[i].clone());
    }
    let recovered = st.bp_decode().unwrap();
    (recovered, st)
}

pub fn bp_fixpoint_is_order_independent_and_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut complete = 0;
    let mut partial = 0;
    for case in 0..1000 {
        let inst = random_instance(&mut rng);
        let oracle = stacked_solution(&inst);
        let mut order: Vec<usize> = (0..inst.packets.len()).collect();
        let (reference, st) = decode(&inst, &order);
        for _ in 0..3 {
            order.shuffle(&mut rng);
            let (again, _) = decode(&inst, &order);
            assert_eq!(again, reference, "case {case}: recovered set depends on arrival order");
        }
        for &s in &reference {
            let got = st.payload(s).expect("recovered payload");
            assert_eq!(got, inst.file.packet(s as usize), "case {case}: source {s}");
            assert_eq!(oracle[s as usize].as_deref(), Some(got), "case {case}: oracle disagrees on {s}");
        }
        let determined = oracle.iter().filter(|o| o.is_some()).count();
        assert_eq!(
            st.is_complete(),
            determined == inst.file.len(),
            "case {case}: completion disagrees with the stacked system"
        );
        if st.is_complete() {
            complete += 1;
        } else if !reference.is_empty() {
            partial += 1;
        }
    }
    assert!(complete > 100 && partial > 100, "instances too one-sided: {complete} complete, {partial} partial");
}

/// Every formula oracle.
pub const FORMULA_CHECKS: [(&str, fn()); 9] = [
    ("rsu_outage_matches_quadrature", rsu_outage_matches_quadrature),
    ("outage_unit_shape_is_exponential", outage_unit_shape_is_exponential),
    ("outage_matches_sampled_fading", outage_matches_sampled_fading),
    ("v2v_loss_matches_quadrature", v2v_loss_matches_quadrature),
    ("reception_pmf_matches_enumeration", reception_pmf_matches_enumeration),
    ("innovation_events_match_counting_monte_carlo", innovation_events_match_counting_monte_carlo),
    ("innovation_events_match_linear_algebra_process", innovation_events_match_linear_algebra_process),
    ("pairwise_surplus_matches_enumeration_and_sampling", pairwise_surplus_matches_enumeration_and_sampling),
    ("intersection_surplus_matches_enumeration", intersection_surplus_matches_enumeration),
];
