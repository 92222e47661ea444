//! Road geometry and vehicle kinematics.
//!
//! The road runs along x; the RSU sits at x = 0, `rsu_offset` metres to the
//! side of the near lane's centre. Vehicles move towards +x and are numbered
//! front to back, so V_1 enters coverage first. Time 0 is V_1's entry.

use rand::Rng;
use thiserror::Error;

use crate::channel::{self, ChannelError, ChannelParams, LossProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid group config: {0}")]
    InvalidConfig(String),
    #[error("lane {lane} lies outside the communication range")]
    LaneOutOfRange { lane: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    /// Lateral distance from the RSU to the near lane's centre.
    pub rsu_offset: f64,
    pub lane_width: f64,
    pub rsu_height: f64,
    pub vehicle_height: f64,
    /// Communication range R of the RSU and of every vehicle.
    pub range: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            rsu_offset: 50.0,
            lane_width: 3.0,
            rsu_height: 8.0,
            vehicle_height: 1.0,
            range: 200.0,
        }
    }
}

impl Geometry {
    pub fn lateral(&self, lane: usize) -> f64 {
        self.rsu_offset + lane as f64 * self.lane_width
    }

    fn height_gap(&self) -> f64 {
        self.rsu_height - self.vehicle_height
    }

    /// Length of road in lane `lane` that lies within range of the RSU.
    pub fn chord(&self, lane: usize) -> Result<f64, ScenarioError> {
        let lat = self.lateral(lane);
        let h = self.height_gap();
        let sq = self.range * self.range - lat * lat - h * h;
        if sq <= 0.0 {
            return Err(ScenarioError::LaneOutOfRange { lane });
        }
        Ok(2.0 * sq.sqrt())
    }

    /// 3D distance from the RSU to a vehicle at longitudinal position `x`.
    pub fn rsu_distance(&self, x: f64, lane: usize) -> f64 {
        let lat = self.lateral(lane);
        let h = self.height_gap();
        (x * x + lat * lat + h * h).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpacingLaw {
    Uniform { low: f64, high: f64 },
    Constant(f64),
}

impl SpacingLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SpacingLaw::Uniform { low, high } if high > low => rng.gen_range(low..high),
            SpacingLaw::Uniform { low, .. } => low,
            SpacingLaw::Constant(g) => g,
        }
    }

    fn min(&self) -> f64 {
        match *self {
            SpacingLaw::Uniform { low, .. } => low,
            SpacingLaw::Constant(g) => g,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LanePattern {
    /// V_1 in the near lane, V_2 in the far lane, and so on.
    Alternating,
    Single(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupConfig {
    pub k: usize,
    /// Mean speed in km/h.
    pub v_mean: f64,
    /// Maximum deviation from the mean in km/h.
    pub v_jitter: f64,
    pub spacing: SpacingLaw,
    pub lanes: LanePattern,
    /// Seconds between speed resamples.
    pub epoch: f64,
    /// Smallest longitudinal gap a resampled speed may produce.
    pub min_gap: f64,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            k: 8,
            v_mean: 55.0,
            v_jitter: 5.0,
            spacing: SpacingLaw::Uniform {
                low: 15.0,
                high: 35.0,
            },
            lanes: LanePattern::Alternating,
            epoch: 1.0,
            min_gap: 11.0,
        }
    }
}

impl GroupConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.v_jitter >= 0.0 && self.v_mean > self.v_jitter) {
            return bad(format!(
                "need v_mean > v_jitter >= 0, got {} and {}",
                self.v_mean, self.v_jitter
            ));
        }
        if !(self.epoch > 0.0) {
            return bad("epoch must be positive".into());
        }
        match self.spacing {
            SpacingLaw::Uniform { low, high } if !(low > 0.0 && high >= low) => {
                return bad(format!("spacing range [{low}, {high}] is invalid"));
            }
            SpacingLaw::Constant(g) if !(g > 0.0) => {
                return bad(format!("spacing {g} must be positive"));
            }
            _ => {}
        }
        if !(self.min_gap > 0.0 && self.min_gap <= self.spacing.min()) {
            return bad(format!(
                "min_gap {} must be positive and at most the smallest spacing",
                self.min_gap
            ));
        }
        Ok(())
    }

    pub fn lane(&self, i: usize) -> usize {
        match self.lanes {
            LanePattern::Alternating => i % 2,
            LanePattern::Single(l) => l,
        }
    }
}

pub fn kmh_to_ms(v: f64) -> f64 {
    v / 3.6
}

/// Seconds to send one packet of `bytes` at `rate_bps`.
pub fn packet_time(bytes: usize, rate_bps: f64) -> f64 {
    bytes as f64 * 8.0 / rate_bps
}

/// Piecewise-constant-speed motion of every vehicle.
#[derive(Clone, Debug)]
pub struct Trajectory {
    geometry: Geometry,
    lanes: Vec<usize>,
    epoch: f64,
    /// `starts[e][i]`: position of vehicle i at time `e · epoch`.
    starts: Vec<Vec<f64>>,
    /// `speeds[e][i]` in m/s, held during epoch e.
    speeds: Vec<Vec<f64>>,
    entry: Vec<f64>,
    exit: Vec<f64>,
}

/// Places the group and draws speeds until the last vehicle leaves coverage.
pub fn build_group<R: Rng + ?Sized>(
    cfg: &GroupConfig,
    geo: &Geometry,
    rng: &mut R,
) -> Result<Trajectory, ScenarioError> {
    cfg.validate()?;
    let k = cfg.k;
    let lanes: Vec<usize> = (0..k).map(|i| cfg.lane(i)).collect();
    let half: Vec<f64> = lanes
        .iter()
        .map(|&l| geo.chord(l).map(|c| c / 2.0))
        .collect::<Result<_, _>>()?;

    let mut x = vec![-half[0]; k];
    for i in 1..k {
        x[i] = x[i - 1] - cfg.spacing.sample(rng);
    }

    let lo = kmh_to_ms(cfg.v_mean - cfg.v_jitter);
    let hi = kmh_to_ms(cfg.v_mean + cfg.v_jitter);
    let tau = cfg.epoch;
    let mut starts = Vec::new();
    let mut speeds = Vec::new();
    loop {
        let mut v = vec![0.0; k];
        let draw = |rng: &mut R| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        for i in 0..k {
            let mut vi = draw(rng);
            if i > 0 {
                let lead = x[i - 1] + v[i - 1] * tau;
                let ok = |vi: f64| lead - (x[i] + vi * tau) >= cfg.min_gap;
                let mut tries = 0;
                while !ok(vi) && tries < 64 {
                    vi = draw(rng);
                    tries += 1;
                }
                if !ok(vi) {
                    vi = vi.min(v[i - 1]);
                }
            }
            v[i] = vi;
        }
        starts.push(x.clone());
        speeds.push(v.clone());
        for i in 0..k {
            x[i] += v[i] * tau;
        }
        if x[k - 1] >= half[k - 1] {
            break;
        }
    }
    starts.push(x);
    // the final entry only anchors extrapolation past the last epoch
    speeds.push(speeds.last().cloned().expect("at least one epoch"));

    let mut traj = Trajectory {
        geometry: geo.clone(),
        lanes,
        epoch: tau,
        starts,
        speeds,
        entry: Vec::new(),
        exit: Vec::new(),
    };
    traj.entry = (0..k).map(|i| traj.crossing_time(i, -half[i])).collect();
    traj.exit = (0..k).map(|i| traj.crossing_time(i, half[i])).collect();
    Ok(traj)
}

impl Trajectory {
    pub fn vehicles(&self) -> usize {
        self.lanes.len()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn lane(&self, i: usize) -> usize {
        self.lanes[i]
    }

    pub fn entry_time(&self, i: usize) -> f64 {
        self.entry[i]
    }

    pub fn exit_time(&self, i: usize) -> f64 {
        self.exit[i]
    }

    /// V_1 entry to V_k exit.
    pub fn phase1_duration(&self) -> f64 {
        self.exit[self.vehicles() - 1]
    }

    fn epoch_of(&self, t: f64) -> usize {
        let e = (t / self.epoch).floor();
        if e <= 0.0 {
            0
        } else {
            (e as usize).min(self.starts.len() - 1)
        }
    }

    pub fn position(&self, i: usize, t: f64) -> f64 {
        let e = self.epoch_of(t);
        self.starts[e][i] + self.speeds[e][i] * (t - e as f64 * self.epoch)
    }

    pub fn speed(&self, i: usize, t: f64) -> f64 {
        self.speeds[self.epoch_of(t)][i]
    }

    fn crossing_time(&self, i: usize, target: f64) -> f64 {
        for e in 0..self.starts.len() {
            let x0 = self.starts[e][i];
            let v = self.speeds[e][i];
            let last = e + 1 == self.starts.len();
            let x1 = x0 + v * self.epoch;
            if x0 >= target {
                return e as f64 * self.epoch;
            }
            if x1 >= target || last {
                return e as f64 * self.epoch + (target - x0) / v;
            }
        }
        unreachable!("trajectory has at least one epoch")
    }

    /// Distance between vehicles in the horizontal plane at time `t`.
    pub fn pair_distance(&self, i: usize, q: usize, t: f64) -> f64 {
        let dx = self.position(i, t) - self.position(q, t);
        let dy = self.geometry.lateral(self.lanes[i]) - self.geometry.lateral(self.lanes[q]);
        dx.hypot(dy)
    }
}

/// 3D distance between the RSU and vehicle `i` at time `t`.
pub fn distance_to_rsu(traj: &Trajectory, i: usize, t: f64) -> f64 {
    traj.geometry
        .rsu_distance(traj.position(i, t), traj.lanes[i])
}

/// `d[i][n]`: RSU distance of vehicle `i` when packet `n` starts.
pub fn packet_distance_table(traj: &Trajectory, packet_time: f64, n: usize) -> Vec<Vec<f64>> {
    (0..traj.vehicles())
        .map(|i| {
            (0..n)
                .map(|p| distance_to_rsu(traj, i, p as f64 * packet_time))
                .collect()
        })
        .collect()
}

/// `(N, J)`: packets that fit in the Phase-1 window, rounded down to whole
/// batches.
pub fn broadcast_budget(traj: &Trajectory, packet_time: f64, batch_size: usize) -> (usize, usize) {
    budget_for_window(traj.phase1_duration(), packet_time, batch_size)
}

pub fn budget_for_window(window: f64, packet_time: f64, batch_size: usize) -> (usize, usize) {
    if !(window > 0.0 && packet_time > 0.0) || batch_size == 0 {
        return (0, 0);
    }
    // a relative nudge keeps exact multiples from rounding down
    let n = ((window / packet_time) * (1.0 + 1e-12)).floor() as usize;
    let j = n / batch_size;
    (j * batch_size, j)
}

/// `∫ sqrt(u² + c²) du`, odd in `u`.
fn hypot_antiderivative(u: f64, c: f64) -> f64 {
    if c == 0.0 {
        return 0.5 * u * u.abs();
    }
    0.5 * (u * u.hypot(c) + c * c * (u / c).asinh())
}

/// Time-average of the distance between `i` and `q` over Phase 1.
pub fn avg_pair_distance(traj: &Trajectory, i: usize, q: usize) -> f64 {
    let horizon = traj.phase1_duration();
    if horizon <= 0.0 {
        return traj.pair_distance(i, q, 0.0);
    }
    let c = (traj.geometry.lateral(traj.lanes[i]) - traj.geometry.lateral(traj.lanes[q])).abs();
    let mut total = 0.0;
    let mut t = 0.0;
    while t < horizon {
        let e = traj.epoch_of(t);
        let mut end = ((e + 1) as f64 * traj.epoch).min(horizon);
        if end <= t {
            end = horizon;
        }
        let u0 = traj.position(i, t) - traj.position(q, t);
        let rel = traj.speeds[e][i] - traj.speeds[e][q];
        let dt = end - t;
        total += if rel.abs() < 1e-12 {
            u0.hypot(c) * dt
        } else {
            let u1 = u0 + rel * dt;
            (hypot_antiderivative(u1, c) - hypot_antiderivative(u0, c)) / rel
        };
        t = end;
    }
    total / horizon
}

/// The V2V loss matrix `P̂` from average pair distances. Pairs beyond range
/// never hear each other.
pub fn v2v_loss_matrix(traj: &Trajectory, params: &ChannelParams) -> Result<Vec<Vec<f64>>, ScenarioError> {
    let k = traj.vehicles();
    let range = traj.geometry.range;
    let mut phat = vec![vec![0.0; k]; k];
    for i in 0..k {
        for q in (i + 1)..k {
            let s = avg_pair_distance(traj, i, q);
            let p = if s > range {
                1.0
            } else {
                channel::v2v_loss_prob(s.max(params.reference_distance * (1.0 + 1e-9)), params)?
            };
            phat[i][q] = p;
            phat[q][i] = p;
        }
    }
    Ok(phat)
}

/// RSU loss `P_{i,n}` for a distance table; beyond range the loss is 1.
pub fn rsu_loss_table(
    distances: &[Vec<f64>],
    params: &ChannelParams,
    range: f64,
) -> Result<Vec<Vec<f64>>, ScenarioError> {
    distances
        .iter()
        .map(|row| {
            row.iter()
                .map(|&d| {
                    if d > range {
                        Ok(1.0)
                    } else {
                        Ok(channel::snr_outage_prob(d, params.pt_dbm, params.m1, params)?)
                    }
                })
                .collect()
        })
        .collect()
}

/// Full loss profile seen by the group over `n` RSU packets.
pub fn loss_profile(
    traj: &Trajectory,
    params: &ChannelParams,
    packet_time: f64,
    n: usize,
    batch_size: usize,
) -> Result<LossProfile, ScenarioError> {
    let d = packet_distance_table(traj, packet_time, n);
    let p_in = rsu_loss_table(&d, params, traj.geometry.range)?;
    let phat = v2v_loss_matrix(traj, params)?;
    Ok(LossProfile::new(batch_size, p_in, phat)?)
}
