//! Analytic tools: the lower bound on V2V transmissions and the bottleneck
//! rank-distribution estimator.

use std::io::Write;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use thiserror::Error;

use crate::channel::LossProfile;
use crate::codec::RankDistribution;
use crate::phase1::expected_individual;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("the group cannot cover every deficit even at full transmission counts")]
    Infeasible,
    #[error("lower-bound LP is unbounded")]
    Unbounded,
    #[error("vehicle {0} can offer nothing to any peer")]
    DegenerateProfile(usize),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("peers offer no innovative content but {0} packets are missing")]
    NoProgress(f64),
    #[error("invalid LP instance: {0}")]
    InvalidInstance(String),
}

/// Input of the transmission lower bound.
#[derive(Clone, Debug, PartialEq)]
pub struct LpInstance {
    pub file_packets: usize,
    /// `Σ_j Y_{i,j}` per vehicle.
    pub y_sums: Vec<f64>,
    pub phat: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Minimizes `Σ X_i` subject to `Σ_{q≠i} (1 - P̂_{q,i}) X_q ≥ F - Σ_j Y_{i,j}`
/// and `0 ≤ X_i ≤ Σ_j Y_{i,j}`.
pub fn lp_lower_bound(inst: &LpInstance) -> Result<LpSolution, AnalysisError> {
    let k = inst.y_sums.len();
    if inst.phat.len() != k || inst.phat.iter().any(|r| r.len() != k) {
        return Err(AnalysisError::InvalidInstance(format!("P̂ must be {k}x{k}")));
    }
    if inst.y_sums.iter().any(|&y| !(y >= 0.0)) {
        return Err(AnalysisError::InvalidInstance("negative reception count".into()));
    }
    let f = inst.file_packets as f64;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let x: Vec<_> = inst.y_sums.iter().map(|&y| lp.add_var(1.0, (0.0, y))).collect();
    for i in 0..k {
        let deficit = f - inst.y_sums[i];
        if deficit <= 0.0 {
            continue;
        }
        let row: Vec<_> = (0..k)
            .filter(|&q| q != i)
            .map(|q| (x[q], 1.0 - inst.phat[q][i]))
            .filter(|&(_, c)| c > 0.0)
            .collect();
        if row.is_empty() {
            return Err(AnalysisError::Infeasible);
        }
        lp.add_constraint(&row, ComparisonOp::Ge, deficit);
    }
    let sol = lp.solve().map_err(|e| match e {
        minilp::Error::Infeasible => AnalysisError::Infeasible,
        minilp::Error::Unbounded => AnalysisError::Unbounded,
    })?;
    let xs: Vec<f64> = x.iter().map(|&v| sol[v].max(0.0)).collect();
    Ok(LpSolution {
        objective: xs.iter().sum(),
        x: xs,
    })
}

/// `|I_{i,j}(q)| = Σ_{n ∈ batch j} (1 - P_{i,n}) P_{q,n}`.
pub fn innovative_set_size(i: usize, j: usize, q: usize, profile: &LossProfile) -> f64 {
    profile
        .batch_range(j)
        .map(|n| (1.0 - profile.packet_loss(i, n)) * profile.packet_loss(q, n))
        .sum()
}

/// `ρ(i, j)` for every batch. When vehicle `i` can offer nothing the result
/// is uniform and the flag is set.
pub fn batch_selection_prob(i: usize, profile: &LossProfile) -> (Vec<f64>, bool) {
    let k = profile.vehicles();
    let jn = profile.batches();
    let weights: Vec<f64> = (0..jn)
        .map(|j| {
            (0..k)
                .filter(|&q| q != i)
                .map(|q| innovative_set_size(i, j, q, profile))
                .sum()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return (vec![1.0 / jn.max(1) as f64; jn], true);
    }
    (weights.into_iter().map(|w| w / total).collect(), false)
}

/// Peer numbering that skips the bottleneck (1-based, as `w(s)`).
pub fn map_w(s: usize, b: usize, k: usize) -> Result<usize, AnalysisError> {
    if s == 0 || s >= k || b == 0 || b > k {
        return Err(AnalysisError::IndexOutOfRange(format!("w({s}) with b={b}, k={k}")));
    }
    Ok(if s < b { s } else { s + 1 })
}

/// 0-based vehicle indices of the peers of `b`, in `w` order.
pub fn peers_of(b: usize, k: usize) -> Vec<usize> {
    (0..k).filter(|&q| q != b).collect()
}

/// `|∩_l I_{w(u_l),j}(b)|` for the given peers (0-based vehicle indices).
pub fn intersection_size(peers: &[usize], j: usize, b: usize, profile: &LossProfile) -> f64 {
    profile
        .batch_range(j)
        .map(|n| {
            let hold: f64 = peers.iter().map(|&p| 1.0 - profile.packet_loss(p, n)).product();
            hold * profile.packet_loss(b, n)
        })
        .sum()
}

/// `I(j)` by the alternating inclusion–exclusion sum over every subset of
/// peers, each intersection weighted by the smallest `ρ` among its members.
/// Exponential in `k`; kept as a reference for small groups.
pub fn innovative_content_verbatim(j: usize, b: usize, profile: &LossProfile, rho: &[Vec<f64>]) -> f64 {
    let peers = peers_of(b, profile.vehicles());
    let p = peers.len();
    let mut total = 0.0;
    for mask in 1u64..(1u64 << p) {
        let members: Vec<usize> = (0..p).filter(|s| mask >> s & 1 == 1).map(|s| peers[s]).collect();
        let weight = members.iter().map(|&v| rho[v][j]).fold(f64::INFINITY, f64::min);
        let size = if members.len() == 1 {
            innovative_set_size(members[0], j, b, profile)
        } else {
            intersection_size(&members, j, b, profile)
        };
        let sign = if members.len() % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * weight * size;
    }
    total
}

/// `I(j)` in closed form. Grouping the subsets by their member of smallest
/// `ρ` collapses the alternating sum: with peers sorted by ascending `ρ` and
/// `a_s = 1 - P_{s,n}`,
/// `I(j) = Σ_n P_{b,n} Σ_s ρ_s a_s Π_{t after s} (1 - a_t)`.
pub fn innovative_content(j: usize, b: usize, profile: &LossProfile, rho: &[Vec<f64>]) -> f64 {
    let mut peers = peers_of(b, profile.vehicles());
    peers.sort_by(|&x, &y| rho[x][j].total_cmp(&rho[y][j]).then(x.cmp(&y)));
    profile
        .batch_range(j)
        .map(|n| {
            let pb = profile.packet_loss(b, n);
            if pb == 0.0 {
                return 0.0;
            }
            let mut tail = 1.0;
            let mut acc = 0.0;
            for &s in peers.iter().rev() {
                let a = 1.0 - profile.packet_loss(s, n);
                acc += rho[s][j] * a * tail;
                tail *= 1.0 - a;
            }
            pb * acc
        })
        .sum()
}

/// Output of the rank estimator for the bottleneck vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct RankEstimate {
    pub bottleneck: usize,
    pub cutoff: usize,
    pub p_e: Vec<f64>,
    /// Batches whose `p_e` had to be clamped at 1.
    pub clamped: usize,
    /// `F_e(r)` for r = 0..=M.
    pub cdf: Vec<f64>,
    /// `f_e(r)`.
    pub pmf: Vec<f64>,
}

impl RankEstimate {
    pub fn distribution(&self) -> RankDistribution {
        RankDistribution::new(self.pmf.clone()).expect("pmf sums to one")
    }
}

fn binomial_cdf_row(m: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; m + 1];
    let mut c = 1.0;
    for v in 0..=m {
        pmf[v] = c * p.powi(v as i32) * (1.0 - p).powi((m - v) as i32);
        c = c * (m - v) as f64 / (v + 1) as f64;
    }
    let mut acc = 0.0;
    pmf.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// Cutoff `c = ceil(Δ / Σ_j I(j))`, per-batch `p_e`, and the mixture CDF.
pub fn cutoff_and_ranks(
    bottleneck: usize,
    k_b: &[f64],
    innovative: &[f64],
    delta: f64,
    batch_size: usize,
) -> Result<RankEstimate, AnalysisError> {
    if k_b.len() != innovative.len() || k_b.is_empty() {
        return Err(AnalysisError::IndexOutOfRange(format!(
            "{} expected counts vs {} content values",
            k_b.len(),
            innovative.len()
        )));
    }
    let m = batch_size as f64;
    let total: f64 = innovative.iter().sum();
    let cutoff = if delta <= 0.0 {
        0
    } else if total > 0.0 {
        (delta / total).ceil() as usize
    } else {
        return Err(AnalysisError::NoProgress(delta));
    };
    let mut clamped = 0;
    let p_e: Vec<f64> = k_b
        .iter()
        .zip(innovative)
        .map(|(&kb, &ij)| {
            let p = (kb + cutoff as f64 * ij) / m;
            if p > 1.0 {
                clamped += 1;
                1.0
            } else {
                p.max(0.0)
            }
        })
        .collect();
    let jn = p_e.len() as f64;
    let mut cdf = vec![0.0; batch_size + 1];
    for &p in &p_e {
        for (r, v) in binomial_cdf_row(batch_size, p).into_iter().enumerate() {
            cdf[r] += v / jn;
        }
    }
    // the last entry is one up to rounding; pin it
    cdf[batch_size] = 1.0;
    let mut pmf: Vec<f64> = (0..=batch_size)
        .map(|r| if r == 0 { cdf[0] } else { (cdf[r] - cdf[r - 1]).max(0.0) })
        .collect();
    let s: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|x| *x /= s);
    Ok(RankEstimate {
        bottleneck,
        cutoff,
        p_e,
        clamped,
        cdf,
        pmf,
    })
}

/// `argmin_i K_i`, ties to the smaller index.
pub fn pick_bottleneck(profile: &LossProfile) -> usize {
    let mut best = 0;
    let mut best_k = f64::INFINITY;
    for i in 0..profile.vehicles() {
        let (_, k) = expected_individual(profile, i);
        if k < best_k {
            best_k = k;
            best = i;
        }
    }
    best
}

/// The whole estimator: bottleneck, `Δ = F - K_b`, `I(j)`, cutoff and ranks.
pub fn estimate_rank_distribution(profile: &LossProfile, file_packets: usize) -> Result<RankEstimate, AnalysisError> {
    let k = profile.vehicles();
    let b = pick_bottleneck(profile);
    let (k_b, total_b) = expected_individual(profile, b);
    let delta = file_packets as f64 - total_b;
    let rho: Vec<Vec<f64>> = (0..k).map(|i| batch_selection_prob(i, profile).0).collect();
    let innovative: Vec<f64> = (0..profile.batches())
        .map(|j| innovative_content(j, b, profile, &rho))
        .collect();
    cutoff_and_ranks(b, &k_b, &innovative, delta, profile.batch_size())
}

/// Empirical CDF of per-batch ranks.
pub fn empirical_rank_cdf(ranks: &[usize], batch_size: usize) -> Vec<f64> {
    RankDistribution::from_ranks(ranks.iter().copied(), batch_size).cdf()
}

/// Largest gap between two CDFs on the same support.
pub fn max_cdf_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Rank CSV with columns `r, f_e, F_e, empirical_f, empirical_F`.
pub fn write_rank_csv<W: Write>(est: &RankEstimate, empirical_cdf: &[f64], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "f_e", "F_e", "empirical_f", "empirical_F"])?;
    for r in 0..est.cdf.len() {
        let ef = if r == 0 {
            empirical_cdf[0]
        } else {
            empirical_cdf[r] - empirical_cdf[r - 1]
        };
        w.write_record([
            r.to_string(),
            format!("{:.6}", est.pmf[r]),
            format!("{:.6}", est.cdf[r]),
            format!("{ef:.6}"),
            format!("{:.6}", empirical_cdf[r]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
