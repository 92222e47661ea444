use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::CodecError;

const SUM_TOLERANCE: f64 = 1e-9;

fn validate(name: &str, p: &[f64]) -> Result<(), CodecError> {
    if p.is_empty() {
        return Err(CodecError::InvalidDistribution(format!("{name} is empty")));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(CodecError::InvalidDistribution(format!(
            "{name} has entry {x}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(CodecError::InvalidDistribution(format!(
            "{name} sums to {sum}"
        )));
    }
    Ok(())
}

/// Degree distribution Ψ over d = 1..=D_max. `psi[d - 1]` is Pr(degree = d).
#[derive(Clone, Debug)]
pub struct DegreeDistribution {
    psi: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl PartialEq for DegreeDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.psi == other.psi
    }
}

impl DegreeDistribution {
    pub fn new(psi: Vec<f64>) -> Result<Self, CodecError> {
        validate("degree distribution", &psi)?;
        let sampler = WeightedIndex::new(&psi)
            .map_err(|e| CodecError::InvalidDistribution(e.to_string()))?;
        Ok(DegreeDistribution { psi, sampler })
    }

    pub fn point_mass(d: usize) -> Result<Self, CodecError> {
        if d == 0 {
            return Err(CodecError::InvalidDistribution("degree 0".into()));
        }
        let mut psi = vec![0.0; d];
        psi[d - 1] = 1.0;
        Self::new(psi)
    }

    pub fn uniform(max_degree: usize) -> Result<Self, CodecError> {
        Self::new(vec![1.0 / max_degree as f64; max_degree])
    }

    /// Builds from nonnegative weights, normalizing them.
    pub fn from_weights(weights: &[f64]) -> Result<Self, CodecError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(CodecError::InvalidDistribution("zero total weight".into()));
        }
        Self::new(weights.iter().map(|w| w.max(0.0) / sum).collect())
    }

    pub fn max_degree(&self) -> usize {
        self.psi.len()
    }

    /// Pr(degree = d).
    pub fn prob(&self, d: usize) -> f64 {
        if d == 0 || d > self.psi.len() {
            0.0
        } else {
            self.psi[d - 1]
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.psi
    }

    pub fn mean(&self) -> f64 {
        self.psi
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng) + 1
    }
}

/// Rank distribution h over r = 0..=M.
#[derive(Clone, Debug, PartialEq)]
pub struct RankDistribution {
    h: Vec<f64>,
}

impl RankDistribution {
    pub fn new(h: Vec<f64>) -> Result<Self, CodecError> {
        validate("rank distribution", &h)?;
        Ok(RankDistribution { h })
    }

    pub fn point_mass(rank: usize, batch_size: usize) -> Self {
        let mut h = vec![0.0; batch_size + 1];
        h[rank] = 1.0;
        RankDistribution { h }
    }

    /// Empirical distribution of the given per-batch ranks.
    pub fn from_ranks(ranks: impl IntoIterator<Item = usize>, batch_size: usize) -> Self {
        let mut h = vec![0.0; batch_size + 1];
        let mut n = 0usize;
        for r in ranks {
            h[r.min(batch_size)] += 1.0;
            n += 1;
        }
        if n > 0 {
            h.iter_mut().for_each(|x| *x /= n as f64);
        } else {
            h[0] = 1.0;
        }
        RankDistribution { h }
    }

    pub fn batch_size(&self) -> usize {
        self.h.len() - 1
    }

    pub fn prob(&self, r: usize) -> f64 {
        self.h.get(r).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }

    pub fn mean(&self) -> f64 {
        self.h.iter().enumerate().map(|(r, p)| r as f64 * p).sum()
    }

    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.h
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }
}
