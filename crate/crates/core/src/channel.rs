//! Radio model: dual-slope path loss, Nakagami-m fading outage, and the
//! per-packet / per-batch loss probabilities derived from it.

use rand::Rng;
use statrs::function::gamma::gamma_lr;
use thiserror::Error;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("distance {distance} m is not beyond the reference distance {reference} m")]
    DistanceTooSmall { distance: f64, reference: f64 },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid channel parameter {field}: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

/// Radio constants. Powers in dBm, threshold in dB.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    pub pt_dbm: f64,
    pub pt_v2v_dbm: f64,
    pub noise_dbm: f64,
    pub snr_threshold_db: f64,
    pub carrier_hz: f64,
    pub reference_distance: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub critical_distance: f64,
    /// Nakagami shape of the RSU-to-vehicle link.
    pub m1: f64,
    /// V2V shape below `v2v_break_distance`.
    pub m2_near: f64,
    /// V2V shape at and beyond `v2v_break_distance`.
    pub m2_far: f64,
    pub v2v_break_distance: f64,
    /// Mean fading power Ω.
    pub omega: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            pt_dbm: 20.0,
            pt_v2v_dbm: 20.0,
            noise_dbm: -89.0,
            snr_threshold_db: 10.0,
            carrier_hz: 5.9e9,
            reference_distance: 10.0,
            beta1: 2.3,
            beta2: 2.7,
            critical_distance: 80.0,
            m1: 1.2,
            m2_near: 1.2,
            m2_far: 0.75,
            v2v_break_distance: 90.0,
            omega: 1.0,
        }
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let finite = [
            ("pt_dbm", self.pt_dbm),
            ("pt_v2v_dbm", self.pt_v2v_dbm),
            ("noise_dbm", self.noise_dbm),
            ("snr_threshold_db", self.snr_threshold_db),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(ChannelError::InvalidParam {
                    field,
                    reason: "must be finite".into(),
                });
            }
        }
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("reference_distance", self.reference_distance),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("omega", self.omega),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::InvalidParam {
                    field,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if !(self.critical_distance > self.reference_distance) {
            return Err(ChannelError::InvalidParam {
                field: "critical_distance",
                reason: "must exceed the reference distance".into(),
            });
        }
        for (field, m) in [
            ("m1", self.m1),
            ("m2_near", self.m2_near),
            ("m2_far", self.m2_far),
        ] {
            if !(m >= 0.5 && m.is_finite()) {
                return Err(ChannelError::InvalidParam {
                    field,
                    reason: format!("Nakagami shape must be >= 0.5, got {m}"),
                });
            }
        }
        Ok(())
    }

    /// Free-space loss (dB) at the reference distance for the carrier.
    pub fn reference_loss_db(&self) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * self.reference_distance * self.carrier_hz
            / SPEED_OF_LIGHT)
            .log10()
    }

    /// Dual-slope path loss in dB. Requires `d > d0`.
    pub fn path_loss_db(&self, d: f64) -> Result<f64, ChannelError> {
        if !(d > self.reference_distance) {
            return Err(ChannelError::DistanceTooSmall {
                distance: d,
                reference: self.reference_distance,
            });
        }
        let pl0 = self.reference_loss_db();
        let d0 = self.reference_distance;
        let dc = self.critical_distance;
        Ok(if d <= dc {
            pl0 + 10.0 * self.beta1 * (d / d0).log10()
        } else {
            pl0 + 10.0 * self.beta1 * (dc / d0).log10() + 10.0 * self.beta2 * (d / dc).log10()
        })
    }

    /// Nakagami shape for a V2V link of the given average distance.
    pub fn v2v_shape(&self, distance: f64) -> f64 {
        if distance < self.v2v_break_distance {
            self.m2_near
        } else {
            self.m2_far
        }
    }
}

/// Linear power gain `10^(-PL(d)/10)`.
pub fn path_gain(d: f64, p: &ChannelParams) -> Result<f64, ChannelError> {
    Ok(db_to_linear(-p.path_loss_db(d)?))
}

/// Outage probability `Pr[SNR < γ_th]` under Nakagami-m fading:
/// `P = γ(m, (m/Ω)·A) / Γ(m)` with `A = γ_th · P_N / (P_t · gain(d))`.
pub fn snr_outage_prob(d: f64, pt_dbm: f64, m: f64, p: &ChannelParams) -> Result<f64, ChannelError> {
    let a = outage_threshold(d, pt_dbm, p)?;
    Ok(outage_from_threshold(a, m, p.omega))
}

/// The fading-gain threshold `A` below which the link is in outage.
pub fn outage_threshold(d: f64, pt_dbm: f64, p: &ChannelParams) -> Result<f64, ChannelError> {
    let gain = path_gain(d, p)?;
    Ok(db_to_linear(p.snr_threshold_db) * db_to_linear(p.noise_dbm) / (db_to_linear(pt_dbm) * gain))
}

/// Gamma CDF with shape `m` and mean `omega` evaluated at `a`.
pub fn outage_from_threshold(a: f64, m: f64, omega: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    if !a.is_finite() {
        return 1.0;
    }
    gamma_lr(m, m * a / omega).clamp(0.0, 1.0)
}

/// V2V packet loss for an average separation `avg_dist`, with the shape
/// chosen by the break-distance rule and vehicle transmit power.
pub fn v2v_loss_prob(avg_dist: f64, p: &ChannelParams) -> Result<f64, ChannelError> {
    snr_outage_prob(avg_dist, p.pt_v2v_dbm, p.v2v_shape(avg_dist), p)
}

/// Bernoulli reception with success probability `1 - loss_p`.
pub fn sample_reception<R: Rng + ?Sized>(loss_p: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() >= loss_p
}

/// Loss probabilities seen by a vehicle group.
#[derive(Clone, Debug, PartialEq)]
pub struct LossProfile {
    batch_size: usize,
    /// `p_in[i][n]`: loss of RSU packet `n` at vehicle `i`.
    p_in: Vec<Vec<f64>>,
    /// `phat[i][q]`: loss of a V2V packet from `i` to `q`.
    phat: Vec<Vec<f64>>,
}

impl LossProfile {
    pub fn new(batch_size: usize, p_in: Vec<Vec<f64>>, phat: Vec<Vec<f64>>) -> Result<Self, ChannelError> {
        let k = p_in.len();
        if batch_size == 0 {
            return Err(ChannelError::InvalidParam {
                field: "batch_size",
                reason: "must be positive".into(),
            });
        }
        let n = p_in.first().map_or(0, Vec::len);
        if p_in.iter().any(|r| r.len() != n) || n % batch_size != 0 {
            return Err(ChannelError::IndexOutOfRange(format!(
                "RSU loss rows must share a length that is a multiple of {batch_size}"
            )));
        }
        if phat.len() != k || phat.iter().any(|r| r.len() != k) {
            return Err(ChannelError::IndexOutOfRange(format!(
                "V2V loss matrix must be {k}x{k}"
            )));
        }
        let all = p_in.iter().chain(&phat).flatten();
        if let Some(bad) = all.copied().find(|x| !(0.0..=1.0).contains(x)) {
            return Err(ChannelError::InvalidParam {
                field: "loss probability",
                reason: format!("{bad} outside [0, 1]"),
            });
        }
        Ok(LossProfile {
            batch_size,
            p_in,
            phat,
        })
    }

    pub fn vehicles(&self) -> usize {
        self.p_in.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn packets(&self) -> usize {
        self.p_in.first().map_or(0, Vec::len)
    }

    pub fn batches(&self) -> usize {
        self.packets() / self.batch_size
    }

    pub fn packet_loss(&self, i: usize, n: usize) -> f64 {
        self.p_in[i][n]
    }

    pub fn rsu_losses(&self, i: usize) -> &[f64] {
        &self.p_in[i]
    }

    pub fn v2v_loss(&self, from: usize, to: usize) -> f64 {
        self.phat[from][to]
    }

    pub fn v2v_matrix(&self) -> &[Vec<f64>] {
        &self.phat
    }

    /// Packet indices of batch `j` (0-based).
    pub fn batch_range(&self, j: usize) -> std::ops::Range<usize> {
        j * self.batch_size..(j + 1) * self.batch_size
    }

    fn check(&self, i: usize, j: usize) -> Result<(), ChannelError> {
        if i >= self.vehicles() {
            return Err(ChannelError::IndexOutOfRange(format!(
                "vehicle {i} of {}",
                self.vehicles()
            )));
        }
        if j >= self.batches() {
            return Err(ChannelError::IndexOutOfRange(format!(
                "batch {j} of {}",
                self.batches()
            )));
        }
        Ok(())
    }

    /// Keeps only the listed vehicles, in the given order.
    pub fn restrict(&self, keep: &[usize]) -> LossProfile {
        LossProfile {
            batch_size: self.batch_size,
            p_in: keep.iter().map(|&i| self.p_in[i].clone()).collect(),
            phat: keep
                .iter()
                .map(|&i| keep.iter().map(|&q| self.phat[i][q]).collect())
                .collect(),
        }
    }
}

/// Mean RSU loss of vehicle `i` over batch `j`.
pub fn batch_loss_prob(j: usize, i: usize, profile: &LossProfile) -> Result<f64, ChannelError> {
    profile.check(i, j)?;
    let row = &profile.p_in[i][profile.batch_range(j)];
    Ok(row.iter().sum::<f64>() / profile.batch_size as f64)
}

/// Probability that a packet of batch `j` reaches none of the first `k`
/// vehicles, averaged over the batch.
pub fn group_loss_prob(j: usize, profile: &LossProfile, k: usize) -> Result<f64, ChannelError> {
    if k == 0 || k > profile.vehicles() {
        return Err(ChannelError::IndexOutOfRange(format!(
            "group size {k} of {}",
            profile.vehicles()
        )));
    }
    profile.check(0, j)?;
    let sum: f64 = profile
        .batch_range(j)
        .map(|n| (0..k).map(|i| profile.p_in[i][n]).product::<f64>())
        .sum();
    Ok(sum / profile.batch_size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_loss_is_continuous_at_critical_distance() {
        let p = ChannelParams::default();
        let left = p.path_loss_db(80.0 - 1e-9).unwrap();
        let right = p.path_loss_db(80.0 + 1e-9).unwrap();
        assert!((left - right).abs() < 1e-6);
    }

    #[test]
    fn far_slope_ratio() {
        let p = ChannelParams::default();
        let ratio = path_gain(100.0, &p).unwrap() / path_gain(80.0, &p).unwrap();
        assert!((ratio - (100.0f64 / 80.0).powf(-2.7)).abs() < 1e-12);
    }

    #[test]
    fn near_slope_direct_substitution() {
        let p = ChannelParams::default();
        let pl = p.path_loss_db(20.0).unwrap();
        let expect = p.reference_loss_db() + 10.0 * 2.3 * 2f64.log10();
        assert!((pl - expect).abs() < 1e-12);
        // free-space loss at 10 m and 5.9 GHz
        assert!((p.reference_loss_db() - 67.86).abs() < 0.01);
    }

    #[test]
    fn distance_inside_reference_is_rejected() {
        let p = ChannelParams::default();
        assert!(matches!(
            path_gain(10.0, &p),
            Err(ChannelError::DistanceTooSmall { .. })
        ));
        assert!(v2v_loss_prob(5.0, &p).is_err());
    }

    #[test]
    fn rayleigh_case_is_exponential() {
        let p = ChannelParams::default();
        for d in [20.0, 60.0, 150.0, 200.0] {
            let a = outage_threshold(d, p.pt_dbm, &p).unwrap();
            let got = snr_outage_prob(d, p.pt_dbm, 1.0, &p).unwrap();
            assert!((got - (1.0 - (-a).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn outage_limits() {
        assert_eq!(outage_from_threshold(0.0, 1.2, 1.0), 0.0);
        assert!(outage_from_threshold(1e-12, 1.2, 1.0) < 1e-12);
        assert!(outage_from_threshold(1e6, 1.2, 1.0) > 1.0 - 1e-12);
    }

    #[test]
    fn outage_monotone_in_distance_and_power() {
        let p = ChannelParams::default();
        let mut prev = 0.0;
        for step in 0..400 {
            let d = 10.5 + step as f64;
            let v = snr_outage_prob(d, 20.0, 1.2, &p).unwrap();
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        let mut prev = 1.0;
        for pt in -10..40 {
            let v = snr_outage_prob(120.0, pt as f64, 1.2, &p).unwrap();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn v2v_shape_switches_at_break_distance() {
        let p = ChannelParams::default();
        assert_eq!(p.v2v_shape(89.999), 1.2);
        assert_eq!(p.v2v_shape(90.0), 0.75);
        let below = v2v_loss_prob(89.999, &p).unwrap();
        let near = snr_outage_prob(89.999, 20.0, 1.2, &p).unwrap();
        assert_eq!(below, near);
        let above = v2v_loss_prob(90.001, &p).unwrap();
        let far = snr_outage_prob(90.001, 20.0, 0.75, &p).unwrap();
        assert_eq!(above, far);
        assert_ne!(below, above);
    }

    #[test]
    fn sampling_extremes_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..10_000).all(|_| sample_reception(0.0, &mut rng)));
        assert!((0..10_000).all(|_| !sample_reception(1.0, &mut rng)));
        let n = 1_000_000;
        let hits = (0..n).filter(|_| sample_reception(0.3, &mut rng)).count();
        let sigma = (n as f64 * 0.7 * 0.3).sqrt();
        assert!((hits as f64 - 0.7 * n as f64).abs() < 3.0 * sigma);
    }

    fn toy_profile() -> LossProfile {
        LossProfile::new(
            2,
            vec![vec![0.1, 0.3, 0.5, 0.5], vec![0.0, 0.2, 1.0, 0.4]],
            vec![vec![0.0, 0.2], vec![0.2, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn batch_and_group_losses() {
        let prof = toy_profile();
        assert!((batch_loss_prob(0, 0, &prof).unwrap() - 0.2).abs() < 1e-12);
        assert!((batch_loss_prob(1, 0, &prof).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(
            group_loss_prob(1, &prof, 1).unwrap(),
            batch_loss_prob(1, 0, &prof).unwrap()
        );
        // (0.5·1.0 + 0.5·0.4)/2
        assert!((group_loss_prob(1, &prof, 2).unwrap() - 0.35).abs() < 1e-12);
        // vehicle 1 never loses packet 0, so only packet 1 contributes
        assert!((group_loss_prob(0, &prof, 2).unwrap() - 0.03).abs() < 1e-12);
        assert!(batch_loss_prob(2, 0, &prof).is_err());
        assert!(batch_loss_prob(0, 2, &prof).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(LossProfile::new(2, vec![vec![0.1; 3]], vec![vec![0.0]]).is_err());
        assert!(LossProfile::new(2, vec![vec![1.1; 2]], vec![vec![0.0]]).is_err());
        assert!(LossProfile::new(2, vec![vec![0.1; 2]], vec![vec![0.0, 0.0]]).is_err());
    }
}
