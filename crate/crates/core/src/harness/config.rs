//! Flat `key = value` configuration.
//!
//! Every key is optional; omitted keys take the defaults below. Unknown keys
//! and values of the wrong type are rejected with the offending field named.

use std::path::Path;

use thiserror::Error;
use toml::{Table, Value};

use crate::channel::ChannelParams;
use crate::scenario::{Geometry, GroupConfig, LanePattern, SpacingLaw};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Single,
    Speed,
    GroupSize,
    RankCdf,
    Delay,
    Rate,
    Dynamics,
}

impl Experiment {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "single" => Experiment::Single,
            "speed" => Experiment::Speed,
            "groupsize" => Experiment::GroupSize,
            "rankcdf" => Experiment::RankCdf,
            "delay" => Experiment::Delay,
            "rate" => Experiment::Rate,
            "dynamics" => Experiment::Dynamics,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Single => "single",
            Experiment::Speed => "speed",
            Experiment::GroupSize => "groupsize",
            Experiment::RankCdf => "rankcdf",
            Experiment::Delay => "delay",
            Experiment::Rate => "rate",
            Experiment::Dynamics => "dynamics",
        }
    }
}

/// Every simulation knob.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub file_packets: usize,
    /// Packet length ℓ in bytes, used for airtime.
    pub packet_length: usize,
    /// Bytes of real payload per source packet. Airtime always uses
    /// `packet_length`; a smaller payload only speeds up the simulation.
    pub payload_bytes: usize,
    pub rate_bps: f64,
    pub batch_size: usize,
    pub backoff_max: f64,
    pub channel: ChannelParams,
    pub geometry: Geometry,
    pub group: GroupConfig,
    pub seed: u64,
    pub trials: usize,
    pub experiment: Experiment,
    /// Largest degree the optimizer may use; 0 picks `min(128 M, F)`.
    pub max_degree: usize,
    /// Ripple constant of the degree optimizer.
    pub degree_ripple: f64,
    /// Backoff window of the block-RLNC baseline.
    pub baseline_backoff_max: f64,
    /// Hard stop for the sharing loop, in multiples of `F`.
    pub max_slot_factor: f64,
    /// Fraction of vehicles that leave before sharing in the dynamics run.
    pub leave_fraction: f64,
    /// Expected number of sources left in no batch that the degree design
    /// tolerates; zero disables the coverage floor.
    pub coverage_miss: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            file_packets: 12000,
            packet_length: 1500,
            payload_bytes: 1500,
            rate_bps: 6e6,
            batch_size: 16,
            backoff_max: 50e-6,
            channel: ChannelParams::default(),
            geometry: Geometry::default(),
            group: GroupConfig::default(),
            seed: 1,
            trials: 1,
            experiment: Experiment::Single,
            max_degree: 0,
            degree_ripple: 2.0,
            baseline_backoff_max: 50e-6,
            max_slot_factor: 20.0,
            leave_fraction: 0.25,
            coverage_miss: 0.01,
        }
    }
}

fn as_f64(field: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(invalid(field, format!("expected a number, got {}", other.type_str()))),
    }
}

fn as_usize(field: &str, v: &Value) -> Result<usize, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(invalid(field, format!("must be nonnegative, got {i}"))),
        other => Err(invalid(field, format!("expected an integer, got {}", other.type_str()))),
    }
}

fn as_str<'a>(field: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str()
        .ok_or_else(|| invalid(field, format!("expected a string, got {}", v.type_str())))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let mut cfg = SimConfig::default();
        let mut spacing_law = "uniform".to_string();
        let (mut low, mut high) = match cfg.group.spacing {
            SpacingLaw::Uniform { low, high } => (low, high),
            SpacingLaw::Constant(g) => (g, g),
        };
        let mut constant = 25.0;
        for (key, v) in &table {
            let k = key.as_str();
            match k {
                "file_packets" => cfg.file_packets = as_usize(k, v)?,
                "packet_length" => cfg.packet_length = as_usize(k, v)?,
                "payload_bytes" => cfg.payload_bytes = as_usize(k, v)?,
                "rate_bps" => cfg.rate_bps = as_f64(k, v)?,
                "batch_size" => cfg.batch_size = as_usize(k, v)?,
                "backoff_max" => cfg.backoff_max = as_f64(k, v)?,
                "pt_dbm" => cfg.channel.pt_dbm = as_f64(k, v)?,
                "pt_v2v_dbm" => cfg.channel.pt_v2v_dbm = as_f64(k, v)?,
                "noise_dbm" => cfg.channel.noise_dbm = as_f64(k, v)?,
                "snr_threshold_db" => cfg.channel.snr_threshold_db = as_f64(k, v)?,
                "carrier_hz" => cfg.channel.carrier_hz = as_f64(k, v)?,
                "reference_distance" => cfg.channel.reference_distance = as_f64(k, v)?,
                "beta1" => cfg.channel.beta1 = as_f64(k, v)?,
                "beta2" => cfg.channel.beta2 = as_f64(k, v)?,
                "critical_distance" => cfg.channel.critical_distance = as_f64(k, v)?,
                "m1" => cfg.channel.m1 = as_f64(k, v)?,
                "m2_near" => cfg.channel.m2_near = as_f64(k, v)?,
                "m2_far" => cfg.channel.m2_far = as_f64(k, v)?,
                "m2_break_distance" => cfg.channel.v2v_break_distance = as_f64(k, v)?,
                "rsu_offset" => cfg.geometry.rsu_offset = as_f64(k, v)?,
                "lane_width" => cfg.geometry.lane_width = as_f64(k, v)?,
                "rsu_height" => cfg.geometry.rsu_height = as_f64(k, v)?,
                "vehicle_height" => cfg.geometry.vehicle_height = as_f64(k, v)?,
                "range" => cfg.geometry.range = as_f64(k, v)?,
                "k" => cfg.group.k = as_usize(k, v)?,
                "v_mean" => cfg.group.v_mean = as_f64(k, v)?,
                "v_jitter" => cfg.group.v_jitter = as_f64(k, v)?,
                "spacing_law" => spacing_law = as_str(k, v)?.to_string(),
                "spacing_low" => low = as_f64(k, v)?,
                "spacing_high" => high = as_f64(k, v)?,
                "spacing" => constant = as_f64(k, v)?,
                "lanes" => {
                    cfg.group.lanes = match as_str(k, v)? {
                        "alternating" => LanePattern::Alternating,
                        "near" => LanePattern::Single(0),
                        "far" => LanePattern::Single(1),
                        other => return Err(invalid(k, format!("unknown lane pattern `{other}`"))),
                    }
                }
                "speed_epoch" => cfg.group.epoch = as_f64(k, v)?,
                "min_gap" => cfg.group.min_gap = as_f64(k, v)?,
                "seed" => {
                    cfg.seed = match v {
                        Value::Integer(i) => *i as u64,
                        other => return Err(invalid(k, format!("expected an integer, got {}", other.type_str()))),
                    }
                }
                "trials" => cfg.trials = as_usize(k, v)?,
                "experiment" => {
                    let s = as_str(k, v)?;
                    cfg.experiment =
                        Experiment::parse(s).ok_or_else(|| invalid(k, format!("unknown experiment `{s}`")))?;
                }
                "max_degree" => cfg.max_degree = as_usize(k, v)?,
                "degree_ripple" => cfg.degree_ripple = as_f64(k, v)?,
                "baseline_backoff_max" => cfg.baseline_backoff_max = as_f64(k, v)?,
                "max_slot_factor" => cfg.max_slot_factor = as_f64(k, v)?,
                "leave_fraction" => cfg.leave_fraction = as_f64(k, v)?,
                "coverage_miss" => cfg.coverage_miss = as_f64(k, v)?,
                other => return Err(invalid(other, "unknown key")),
            }
        }
        cfg.group.spacing = match spacing_law.as_str() {
            "uniform" => SpacingLaw::Uniform { low, high },
            "constant" => SpacingLaw::Constant(constant),
            other => return Err(invalid("spacing_law", format!("unknown law `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.file_packets == 0 {
            return Err(invalid("file_packets", "must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > u16::MAX as usize {
            return Err(invalid("batch_size", "must be in 1..=65535"));
        }
        if self.packet_length == 0 {
            return Err(invalid("packet_length", "must be positive"));
        }
        if !(self.rate_bps > 0.0) {
            return Err(invalid("rate_bps", "must be positive"));
        }
        for (f, v) in [
            ("backoff_max", self.backoff_max),
            ("baseline_backoff_max", self.baseline_backoff_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(f, "must be a nonnegative number"));
            }
        }
        if !(self.degree_ripple >= 0.0) {
            return Err(invalid("degree_ripple", "must be nonnegative"));
        }
        if !(self.max_slot_factor > 0.0) {
            return Err(invalid("max_slot_factor", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.leave_fraction) {
            return Err(invalid("leave_fraction", "must be in [0, 1)"));
        }
        if !(self.coverage_miss >= 0.0 && self.coverage_miss.is_finite()) {
            return Err(invalid("coverage_miss", "must be a finite nonnegative number"));
        }
        self.channel.validate().map_err(|e| match e {
            crate::channel::ChannelError::InvalidParam { field, reason } => invalid(field, reason),
            other => invalid("channel", other.to_string()),
        })?;
        self.group.validate().map_err(|e| invalid("group", e.to_string()))?;
        let lanes = match self.group.lanes {
            LanePattern::Alternating => vec![0, 1],
            LanePattern::Single(l) => vec![l],
        };
        for lane in lanes {
            self.geometry
                .chord(lane)
                .map_err(|e| invalid("range", e.to_string()))?;
        }
        if !(self.geometry.range > self.channel.reference_distance) {
            return Err(invalid("range", "must exceed the reference distance"));
        }
        Ok(())
    }

    /// RSU airtime of one packet.
    pub fn packet_time(&self) -> f64 {
        crate::scenario::packet_time(self.packet_length, self.rate_bps)
    }

    /// V2V airtime: the packet plus its coefficient vector and batch id.
    pub fn v2v_packet_time(&self) -> f64 {
        crate::scenario::packet_time(self.packet_length + self.batch_size + 4, self.rate_bps)
    }
}
