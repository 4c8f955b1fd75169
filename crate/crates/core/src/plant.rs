//! Reference two-vehicle platoon.
//!
//! The leader integrates a commanded acceleration. The follower tracks a
//! constant-time-headway spacing `r + h * v_f` with a PD law on the gap error
//! and the relative speed, saturated to the acceleration limits and passed
//! through a first-order actuator lag. The leader orientation is a scripted
//! piecewise-constant yaw-rate signal that does not feed back into the
//! longitudinal dynamics.
//!
//! Integration is forward Euler at `internal_dt_ms`, applied in this order:
//!
//! ```text
//! v_l   += acc * dt
//! e      = d - (r + h * v_f)
//! a_cmd  = clamp(kp * e + kd * (v_l - v_f), accel_min, accel_max)
//! a_f   += dt / tau * (a_cmd - a_f)
//! v_f   += a_f * dt
//! d     += (v_l - v_f) * dt
//! delta += yaw_rate(t) * dt
//! ```

use crate::kv::{KvError, KvMap};
use crate::seed::splitmix64;
use alloc::format;
use alloc::string::String;

/// Shipped defaults; the only place numeric plant constants are written down.
pub const DEFAULT_CONFIG: &str = include_str!("../defaults/plant.conf");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlantError {
    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),
    #[error("acceleration {acc} outside [{min}, {max}]")]
    AccelOutOfRange { acc: f64, min: f64, max: f64 },
    #[error("a control step must last at least one sampling period")]
    ZeroSteps,
    #[error(transparent)]
    Kv(#[from] KvError),
}

/// Scripted orientation signal: the yaw rate is constant on consecutive
/// segments of `segment_ms`, each segment drawn from `seed`. A segment is
/// straight with probability `straight_prob`, otherwise its rate is uniform
/// in `[-max_yaw_rate, max_yaw_rate]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveProfile {
    pub segment_ms: u32,
    pub max_yaw_rate: f64,
    pub straight_prob: f64,
    pub seed: u64,
}

impl CurveProfile {
    /// Yaw rate in rad/s at elapsed time `t_ms`.
    pub fn yaw_rate(&self, t_ms: u64) -> f64 {
        let segment = t_ms / u64::from(self.segment_ms);
        let h = splitmix64(self.seed ^ splitmix64(segment));
        let u1 = (h >> 11) as f64 / (1u64 << 53) as f64;
        let u2 = (splitmix64(h) >> 11) as f64 / (1u64 << 53) as f64;
        if u1 < self.straight_prob {
            0.0
        } else {
            (2.0 * u2 - 1.0) * self.max_yaw_rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantConfig {
    /// Sampling period t_s.
    pub sample_period_ms: u32,
    pub internal_dt_ms: u32,
    pub accel_min: f64,
    pub accel_max: f64,
    pub truck_length: f64,
    /// Standstill gap r of the spacing policy.
    pub standstill_gap: f64,
    /// Time headway h.
    pub headway: f64,
    pub kp: f64,
    pub kd: f64,
    /// Actuator lag time constant tau.
    pub follower_lag: f64,
    pub initial_distance: f64,
    pub curve: CurveProfile,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self::from_kv(&KvMap::parse(DEFAULT_CONFIG).expect("shipped plant config parses"))
            .expect("shipped plant config is valid")
    }
}

const KEYS: &[&str] = &[
    "sample_period_ms",
    "internal_dt_ms",
    "accel_min",
    "accel_max",
    "truck_length",
    "standstill_gap",
    "headway",
    "kp",
    "kd",
    "follower_lag",
    "initial_distance",
    "curve.segment_ms",
    "curve.max_yaw_rate",
    "curve.straight_prob",
    "curve.seed",
];

impl PlantConfig {
    pub fn from_kv(kv: &KvMap) -> Result<Self, PlantError> {
        kv.check_known(KEYS)?;
        let cfg = Self {
            sample_period_ms: kv.parse_value("sample_period_ms")?,
            internal_dt_ms: kv.parse_value("internal_dt_ms")?,
            accel_min: kv.parse_value("accel_min")?,
            accel_max: kv.parse_value("accel_max")?,
            truck_length: kv.parse_value("truck_length")?,
            standstill_gap: kv.parse_value("standstill_gap")?,
            headway: kv.parse_value("headway")?,
            kp: kv.parse_value("kp")?,
            kd: kv.parse_value("kd")?,
            follower_lag: kv.parse_value("follower_lag")?,
            initial_distance: kv.parse_value("initial_distance")?,
            curve: CurveProfile {
                segment_ms: kv.parse_value("curve.segment_ms")?,
                max_yaw_rate: kv.parse_value("curve.max_yaw_rate")?,
                straight_prob: kv.parse_value("curve.straight_prob")?,
                seed: kv.parse_value("curve.seed")?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.insert("sample_period_ms", format!("{}", self.sample_period_ms));
        kv.insert("internal_dt_ms", format!("{}", self.internal_dt_ms));
        kv.insert("accel_min", format!("{}", self.accel_min));
        kv.insert("accel_max", format!("{}", self.accel_max));
        kv.insert("truck_length", format!("{}", self.truck_length));
        kv.insert("standstill_gap", format!("{}", self.standstill_gap));
        kv.insert("headway", format!("{}", self.headway));
        kv.insert("kp", format!("{}", self.kp));
        kv.insert("kd", format!("{}", self.kd));
        kv.insert("follower_lag", format!("{}", self.follower_lag));
        kv.insert("initial_distance", format!("{}", self.initial_distance));
        kv.insert("curve.segment_ms", format!("{}", self.curve.segment_ms));
        kv.insert("curve.max_yaw_rate", format!("{}", self.curve.max_yaw_rate));
        kv.insert(
            "curve.straight_prob",
            format!("{}", self.curve.straight_prob),
        );
        kv.insert("curve.seed", format!("{}", self.curve.seed));
        kv
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: &str| Err(PlantError::InvalidConfig(String::from(m)));
        let finite = [
            self.accel_min,
            self.accel_max,
            self.truck_length,
            self.standstill_gap,
            self.headway,
            self.kp,
            self.kd,
            self.follower_lag,
            self.initial_distance,
            self.curve.max_yaw_rate,
            self.curve.straight_prob,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all numeric fields must be finite");
        }
        if self.internal_dt_ms == 0 || self.sample_period_ms == 0 {
            return bad("time steps must be positive");
        }
        // The sampling instant sits half a period before the next input, so
        // t_s / 2 must also land on the integration grid.
        if self.sample_period_ms % (2 * self.internal_dt_ms) != 0 {
            return bad("2 * internal_dt_ms must divide sample_period_ms");
        }
        if !(self.accel_min < 0.0 && 0.0 < self.accel_max) {
            return bad("need accel_min < 0 < accel_max");
        }
        if self.initial_distance <= self.truck_length {
            return bad("initial_distance must exceed truck_length");
        }
        if self.follower_lag <= 0.0 {
            return bad("follower_lag must be positive");
        }
        if self.headway < 0.0 {
            return bad("headway must be non-negative");
        }
        if self.curve.segment_ms == 0 || !(0.0..=1.0).contains(&self.curve.straight_prob) {
            return bad("curve segment must be positive and straight_prob in [0, 1]");
        }
        Ok(())
    }

    /// Internal integration steps per sampling period.
    pub fn substeps(&self) -> u64 {
        u64::from(self.sample_period_ms / self.internal_dt_ms)
    }

    pub fn with_curve_seed(mut self, seed: u64) -> Self {
        self.curve.seed = seed;
        self
    }
}

/// Leader speeds above this (negative) bound count as standing still, so that
/// accelerating and braking by the same amount does not register as reversing
/// through rounding.
pub const REVERSE_TOLERANCE: f64 = 1e-9;

pub fn reversing(v_l: f64) -> bool {
    v_l < -REVERSE_TOLERANCE
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub v_l: f64,
    pub v_f: f64,
    /// Leader–follower gap; may drop below the truck length.
    pub d: f64,
    pub a_f: f64,
    pub delta: f64,
    pub t_ms: u64,
}

impl PlantState {
    pub fn reset(cfg: &PlantConfig) -> Self {
        Self {
            v_l: 0.0,
            v_f: 0.0,
            d: cfg.initial_distance,
            a_f: 0.0,
            delta: 0.0,
            t_ms: 0,
        }
    }

    fn sample(&self, acc: f64) -> SampleRecord {
        SampleRecord {
            t_ms: self.t_ms,
            acc,
            delta: self.delta,
            v_l: self.v_l,
            v_f: self.v_f,
            d: self.d,
        }
    }
}

/// Observable valuation captured at one sampling instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub t_ms: u64,
    /// Leader acceleration command in force at this instant.
    pub acc: f64,
    pub delta: f64,
    pub v_l: f64,
    pub v_f: f64,
    pub d: f64,
}

/// A plant instance: configuration plus mutable state.
#[derive(Debug, Clone)]
pub struct Plant {
    cfg: PlantConfig,
    state: PlantState,
}

impl Plant {
    pub fn new(cfg: PlantConfig) -> Result<Self, PlantError> {
        cfg.validate()?;
        Ok(Self {
            state: PlantState::reset(&cfg),
            cfg,
        })
    }

    /// Continues from an arbitrary state, e.g. the end of a recorded trace.
    pub fn resume(cfg: PlantConfig, state: PlantState) -> Result<Self, PlantError> {
        cfg.validate()?;
        Ok(Self { cfg, state })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = PlantState::reset(&self.cfg);
    }

    /// Holds the leader acceleration at `acc` for `steps` sampling periods and
    /// returns the sample taken half a period before the end of the hold.
    pub fn step_control(&mut self, acc: f64, steps: u32) -> Result<SampleRecord, PlantError> {
        if steps == 0 {
            return Err(PlantError::ZeroSteps);
        }
        if !(acc >= self.cfg.accel_min && acc <= self.cfg.accel_max) {
            return Err(PlantError::AccelOutOfRange {
                acc,
                min: self.cfg.accel_min,
                max: self.cfg.accel_max,
            });
        }
        let n = self.cfg.substeps();
        let total = u64::from(steps) * n;
        let sample_at = total - n / 2;
        let mut record = None;
        for k in 1..=total {
            self.euler(acc);
            if k == sample_at {
                record = Some(self.state.sample(acc));
            }
        }
        Ok(record.expect("sample instant lies inside the hold"))
    }

    fn euler(&mut self, acc: f64) {
        let c = &self.cfg;
        let s = &mut self.state;
        let dt = f64::from(c.internal_dt_ms) / 1000.0;
        s.v_l += acc * dt;
        let e = s.d - (c.standstill_gap + c.headway * s.v_f);
        let a_cmd = (c.kp * e + c.kd * (s.v_l - s.v_f)).clamp(c.accel_min, c.accel_max);
        s.a_f += dt / c.follower_lag * (a_cmd - s.a_f);
        s.v_f += s.a_f * dt;
        s.d += (s.v_l - s.v_f) * dt;
        s.delta += c.curve.yaw_rate(s.t_ms) * dt;
        s.t_ms += u64::from(c.internal_dt_ms);
    }
}
