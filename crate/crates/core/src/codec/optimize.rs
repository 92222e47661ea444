//! Degree-distribution design from a rank distribution.
//!
//! Asymptotic BP analysis of BATS codes: when a fraction `x` of the source
//! packets is recovered, a batch of degree `d` and rank `r` resolves one of
//! its contributors with probability
//! `I_{d,r}(x) = Pr[Binomial(d-1, x) >= d - r]` (1 when `r >= d`). Decoding
//! keeps going while
//!
//! ```text
//!     Ω(x) + θ ln(1 - x) >= 0,    Ω(x) = Σ_d Ψ_d · d · Σ_r h_r I_{d,r}(x)
//! ```
//!
//! for `x` up to `1 - η`, where `θ = F / J` is the number of source packets
//! per batch. Maximizing θ over Ψ is a linear program.
//!
//! At finite length BP also needs a ripple of decodable packets at every
//! stage. With `F` packets and a fraction `x` recovered we ask for roughly
//! `c·sqrt(F(1-x))` of them, i.e. `exp(-Ω/θ) <= (1-x)(1-s(x))` with
//! `s(x) = min(1/2, c / sqrt(F(1-x)))`, which adds `θ ln(1 - s(x))` to the
//! left side and keeps the problem linear.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::{CodecError, DegreeDistribution, RankDistribution};

/// Result of the degree LP.
#[derive(Clone, Debug)]
pub struct OptimizedDegrees {
    pub psi: DegreeDistribution,
    /// Achievable source packets per batch.
    pub theta: f64,
    /// `E[rank] / θ - 1`: the coding overhead the design implies.
    pub overhead: f64,
}

/// Knobs of the degree LP.
#[derive(Clone, Debug)]
pub struct DegreeOptimizer {
    pub max_degree: usize,
    /// Target unrecovered fraction: constraints cover `x ∈ [0, 1 - η]`.
    pub eta: f64,
    pub grid_points: usize,
    /// Ripple constant `c`; zero gives the plain asymptotic condition.
    pub ripple: f64,
    pub file_packets: usize,
    /// Lower bound on `E[d]`; zero leaves the mean degree free.
    pub min_mean_degree: f64,
}

impl DegreeOptimizer {
    /// Defaults for a file of `file_packets` packets and batch size `M`.
    pub fn for_file(file_packets: usize, batch_size: usize) -> Self {
        let f = file_packets.max(1);
        DegreeOptimizer {
            max_degree: (128 * batch_size).min(f).max(1),
            eta: 1.0 / (2.0 * f as f64),
            grid_points: 240,
            ripple: 2.0,
            file_packets: f,
            min_mean_degree: 0.0,
        }
    }

    /// `(1 - x)` log-spaced between 1 and η, plus the origin.
    fn grid(&self) -> Vec<f64> {
        let n = self.grid_points.max(2);
        let ln_eta = self.eta.ln();
        (0..n)
            .map(|i| 1.0 - (ln_eta * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    fn ripple_fraction(&self, x: f64) -> f64 {
        if self.ripple <= 0.0 {
            return 0.0;
        }
        let remaining = self.file_packets.max(1) as f64 * (1.0 - x);
        (self.ripple / remaining.sqrt()).min(0.5)
    }

    pub fn optimize(&self, h: &RankDistribution) -> Result<OptimizedDegrees, CodecError> {
        if h.prob(0) >= 1.0 - 1e-12 {
            return Err(CodecError::InfeasibleLp(
                "rank distribution has all mass at rank 0".into(),
            ));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) || self.max_degree == 0 {
            return Err(CodecError::InfeasibleLp(format!(
                "bad optimizer settings eta={} max_degree={}",
                self.eta, self.max_degree
            )));
        }
        let grid = self.grid();
        let m = h.batch_size();

        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let theta = lp.add_var(1.0, (0.0, f64::INFINITY));
        let psi: Vec<_> = (0..self.max_degree)
            .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
            .collect();

        for &x in &grid {
            let mut row: Vec<_> = Vec::with_capacity(self.max_degree + 1);
            for (i, &var) in psi.iter().enumerate() {
                let a = omega_term(i + 1, x, h, m);
                if a != 0.0 {
                    row.push((var, a));
                }
            }
            let log = (1.0 - x).ln() + (1.0 - self.ripple_fraction(x)).ln();
            if log != 0.0 {
                row.push((theta, log));
            }
            if !row.is_empty() {
                lp.add_constraint(&row, ComparisonOp::Ge, 0.0);
            }
        }
        let sum: Vec<_> = psi.iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(&sum, ComparisonOp::Eq, 1.0);
        if self.min_mean_degree > 0.0 {
            if self.min_mean_degree > self.max_degree as f64 {
                return Err(CodecError::InfeasibleLp(format!(
                    "mean degree {} exceeds max degree {}",
                    self.min_mean_degree, self.max_degree
                )));
            }
            let mean: Vec<_> = psi.iter().enumerate().map(|(i, &v)| (v, (i + 1) as f64)).collect();
            lp.add_constraint(&mean, ComparisonOp::Ge, self.min_mean_degree);
        }

        let solution = lp
            .solve()
            .map_err(|e| CodecError::InfeasibleLp(e.to_string()))?;
        let theta_value = solution[theta];
        if !(theta_value > 0.0) {
            return Err(CodecError::InfeasibleLp("optimal rate is zero".into()));
        }
        let weights: Vec<f64> = psi.iter().map(|&v| solution[v].max(0.0)).collect();
        let psi = DegreeDistribution::from_weights(&weights)?;
        Ok(OptimizedDegrees {
            psi,
            theta: theta_value,
            overhead: h.mean() / theta_value - 1.0,
        })
    }
}

/// Smallest `E[d]` for which `J` independent batches leave at most `miss`
/// of the `F` sources uncovered in expectation: `F (1 - E[d]/F)^J <= miss`.
pub fn coverage_mean_degree(file_packets: usize, batches: usize, miss: f64) -> f64 {
    let f = file_packets as f64;
    if batches == 0 || miss >= f {
        return 0.0;
    }
    f * (1.0 - (miss / f).powf(1.0 / batches as f64))
}

/// `d · Σ_r h_r I_{d,r}(x)`.
pub(crate) fn omega_term(d: usize, x: f64, h: &RankDistribution, m: usize) -> f64 {
    let tails = upper_tails(d, x, m);
    let mut acc = 0.0;
    for r in 1..=m {
        let hr = h.prob(r);
        if hr == 0.0 {
            continue;
        }
        let i = if r >= d { 1.0 } else { tails[r] };
        acc += hr * i;
    }
    d as f64 * acc
}

/// `tails[r] = Pr[Binomial(d-1, x) >= d - r]` for r in 1..=min(M, d-1).
fn upper_tails(d: usize, x: f64, m: usize) -> Vec<f64> {
    let mut tails = vec![0.0; m + 1];
    let n = d - 1;
    if d <= 1 || x <= 0.0 {
        return tails;
    }
    if x >= 1.0 {
        tails.iter_mut().for_each(|t| *t = 1.0);
        return tails;
    }
    // pmf(n) = x^n; pmf(k-1) = pmf(k) · k/(n-k+1) · (1-x)/x
    let ratio = (1.0 - x) / x;
    let mut pmf = (n as f64 * x.ln()).exp();
    let mut acc = 0.0;
    let mut k = n;
    for r in 1..=m.min(n) {
        // r = d - k  →  k = d - r = n + 1 - r
        acc += pmf;
        tails[r] = acc.min(1.0);
        if k == 0 {
            break;
        }
        pmf *= k as f64 / (n - k + 1) as f64 * ratio;
        k -= 1;
    }
    tails
}

/// Optimized Ψ for the rank distribution `h` with the default settings.
pub fn optimize_degree_distribution(
    h: &RankDistribution,
    batch_size: usize,
    file_packets: usize,
) -> Result<DegreeDistribution, CodecError> {
    if h.batch_size() != batch_size {
        return Err(CodecError::InvalidDistribution(format!(
            "rank distribution covers M={}, expected {batch_size}",
            h.batch_size()
        )));
    }
    DegreeOptimizer::for_file(file_packets, batch_size)
        .optimize(h)
        .map(|o| o.psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom_tail_direct(n: usize, x: f64, at_least: usize) -> f64 {
        (at_least..=n)
            .map(|k| {
                let ln_c = (1..=n).map(|i| (i as f64).ln()).sum::<f64>()
                    - (1..=k).map(|i| (i as f64).ln()).sum::<f64>()
                    - (1..=n - k).map(|i| (i as f64).ln()).sum::<f64>();
                (ln_c + k as f64 * x.ln() + (n - k) as f64 * (1.0 - x).ln()).exp()
            })
            .sum()
    }

    #[test]
    fn tails_match_direct_summation() {
        for d in [2usize, 5, 17, 40, 200] {
            for x in [0.01, 0.3, 0.7, 0.95, 0.9999] {
                let t = upper_tails(d, x, 16);
                for r in 1..d.min(17) {
                    let direct = binom_tail_direct(d - 1, x, d - r);
                    assert!((t[r] - direct).abs() < 1e-9, "d={d} x={x} r={r}");
                }
            }
        }
    }

    #[test]
    fn all_mass_at_rank_zero_is_infeasible() {
        let h = RankDistribution::point_mass(0, 16);
        assert!(matches!(
            optimize_degree_distribution(&h, 16, 1000),
            Err(CodecError::InfeasibleLp(_))
        ));
    }

    #[test]
    fn full_rank_channel_gives_valid_distribution() {
        let h = RankDistribution::point_mass(16, 16);
        let opt = DegreeOptimizer::for_file(1000, 16).optimize(&h).unwrap();
        let sum: f64 = opt.psi.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(opt.theta > 0.0 && opt.theta < 16.0);
    }
}
