//! Stochastic-cloning error-state Kalman filter.
//!
//! Strapdown integration of the raw IMU provides the high-rate state; the
//! network's per-window displacement (with its predicted covariance) provides
//! the drift-free correction. Because a displacement relates the *current*
//! pose to a pose in the *past*, the filter keeps a ring of cloned past poses
//! whose errors stay correlated with the present through an augmented
//! covariance; this is the stochastic-cloning construction.
//!
//! - error state: [δθ(3), δv(3), δp(3), δb_g(3), δb_a(3)] plus [δθᵢ(3), δpᵢ(3)]
//!   per clone, with the rotation error left-multiplicative in the world frame
//!   (R_true = Exp(δθ)·R)
//! - [`Ekf`](state::Ekf) owns propagation, cloning, marginalization and the
//!   displacement update
//! - [`run_filter`](filter::run_filter) drives the whole loop over a
//!   [`Sequence`](crate::data::Sequence), pulling measurements from any
//!   [`DisplacementSource`](filter::DisplacementSource)

mod filter;
mod state;

use serde::{Deserialize, Serialize};

pub use crate::geometry::yaw_rotation;
pub use filter::{
    init_from_ground_truth, run_filter, run_filter_with_init, DisplacementSource, FilterOutput,
    NetSource, NoSource, OracleSource, UpdateLog, WindowContext,
};
pub use state::{CloneState, Ekf, NavState, UpdateReport, CLONE_DIM, NAV_DIM};

use crate::data::{DataError, NoiseSpec};
use crate::network::NetworkError;

/// Errors produced by filter construction and execution.
#[derive(Debug, thiserror::Error)]
pub enum EkfError {
    /// Invalid configuration or misuse of the filter API.
    #[error("filter config: {0}")]
    Config(String),
    /// Propagation step with a nonpositive or nonfinite time increment.
    #[error("invalid time step dt = {0}")]
    InvalidDt(f64),
    /// A clone index that does not refer to a live clone.
    #[error("clone index {idx} out of range ({count} clones)")]
    BadCloneIndex { idx: usize, count: usize },
    /// The sequence is shorter than a single measurement window.
    #[error("sequence has {have} samples, need more than {need} for one window")]
    SequenceTooShort { need: usize, have: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

pub type Result<T> = std::result::Result<T, EkfError>;

/// Continuous white-noise densities driving the error-state process noise.
///
/// These are densities, not per-sample standard deviations: the discrete
/// covariance added per propagation step is density² × dt. Use
/// [`NoiseParams::from_sample_std`] to convert the synthetic generator's
/// per-sample values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Gyro white noise, rad/s/√Hz.
    pub sigma_g: f64,
    /// Accel white noise, m/s²/√Hz.
    pub sigma_a: f64,
    /// Gyro bias random walk, rad/s²/√Hz.
    pub sigma_bg: f64,
    /// Accel bias random walk, m/s³/√Hz.
    pub sigma_ba: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            sigma_g: 1e-3,
            sigma_a: 1e-2,
            sigma_bg: 1e-5,
            sigma_ba: 1e-4,
        }
    }
}

impl NoiseParams {
    /// Densities matching a generator that draws independent noise per sample
    /// at `rate` Hz: density = per-sample std × √dt, so the per-step error
    /// variance σ²·dt² agrees between the two conventions. Constant generator
    /// biases are not white noise, so the random-walk densities are zero.
    pub fn from_sample_std(noise: &NoiseSpec, rate: f64) -> Self {
        let sqrt_dt = (1.0 / rate).sqrt();
        Self {
            sigma_g: noise.sigma_g * sqrt_dt,
            sigma_a: noise.sigma_a * sqrt_dt,
            sigma_bg: 0.0,
            sigma_ba: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_g", self.sigma_g),
            ("sigma_a", self.sigma_a),
            ("sigma_bg", self.sigma_bg),
            ("sigma_ba", self.sigma_ba),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(EkfError::Config(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Initial error-state variances (each block isotropic).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitCov {
    /// Attitude, rad².
    pub theta: f64,
    /// Velocity, (m/s)².
    pub v: f64,
    /// Position, m².
    pub p: f64,
    /// Gyro bias, (rad/s)².
    pub bg: f64,
    /// Accel bias, (m/s²)².
    pub ba: f64,
}

impl Default for InitCov {
    fn default() -> Self {
        Self {
            theta: 1e-6,
            v: 1e-4,
            p: 1e-6,
            bg: 1e-8,
            ba: 1e-6,
        }
    }
}

impl InitCov {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta", self.theta),
            ("v", self.v),
            ("p", self.p),
            ("bg", self.bg),
            ("ba", self.ba),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(EkfError::Config(format!(
                    "initial variance {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Everything [`run_filter`] needs besides the sequence and the measurement
/// source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub noise: NoiseParams,
    pub init: InitCov,
    /// Ring-buffer capacity for cloned past poses.
    pub clone_capacity: usize,
    /// Measurement window length in seconds.
    pub window_duration: f64,
    /// Spacing between consecutive measurement windows in seconds.
    pub update_stride: f64,
    /// Lower bound applied to each diagonal of the measurement covariance, m².
    pub variance_floor: f64,
    /// Updates whose innovation covariance is worse conditioned than this are
    /// rejected and logged.
    pub max_condition: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams::default(),
            init: InitCov::default(),
            clone_capacity: 10,
            window_duration: 1.0,
            update_stride: 0.1,
            variance_floor: 1e-6,
            max_condition: 1e12,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.init.validate()?;
        if self.clone_capacity == 0 {
            return Err(EkfError::Config("clone_capacity must be at least 1".into()));
        }
        for (name, v) in [
            ("window_duration", self.window_duration),
            ("update_stride", self.update_stride),
            ("variance_floor", self.variance_floor),
            ("max_condition", self.max_condition),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(EkfError::Config(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if self.clone_capacity as f64 * self.update_stride < self.window_duration - 1e-12 {
            return Err(EkfError::Config(format!(
                "clone_capacity {} × update_stride {} s cannot span a {} s window",
                self.clone_capacity, self.update_stride, self.window_duration
            )));
        }
        Ok(())
    }
}
