//! Composite loss, warmup/cosine learning-rate schedule, Adam, and the
//! training loop over window batches.
//!
//! The loss is a weighted sum of a displacement MSE term and a heteroscedastic
//! Gaussian negative log-likelihood term. Both are batch means, so the
//! learning rate is batch-size invariant. Training is strictly sequential:
//! batches run on one tape each and parameter updates are totally ordered by
//! step index, which makes a run bit-reproducible from its seed.

mod adam;
mod loss;
mod trainer;

pub use adam::{clip_global_norm, AdamState};
pub use loss::{batch_total, loss_mse, loss_nll, loss_total, nll_one, window_loss, WindowLossIds};
pub use trainer::{
    dataset_gate_stats, dataset_mse, read_train_log, train, write_train_log, EpochLog, GateStats,
    TrainConfig, STATIONARY_THRESHOLD_M,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training config: {0}")]
    Config(String),

    #[error("schedule evaluated outside [0, {total}]: epoch {epoch}")]
    EpochOutOfRange { epoch: f64, total: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("loss diverged (non-finite) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),

    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),

    #[error("writing training log: {0}")]
    Io(#[from] std::io::Error),

    #[error("writing training log: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Weights of the two loss terms plus an optional delay before the likelihood
/// term switches on.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_mse: f64,
    pub lambda_nll: f64,
    /// Epochs to train with the MSE term alone before enabling the NLL term.
    pub nll_delay_epochs: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_mse: 1e2,
            lambda_nll: 1e-4,
            nll_delay_epochs: 0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_mse < 0.0 || self.lambda_nll < 0.0 {
            return Err(TrainError::Config(format!(
                "loss weights must be nonnegative, got mse {} nll {}",
                self.lambda_mse, self.lambda_nll
            )));
        }
        Ok(())
    }
}

/// Linear warmup to the peak rate, then cosine annealing down to the floor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub lr_start: f64,
    pub lr_peak: f64,
    pub warmup_epochs: f64,
    pub total_epochs: f64,
    pub lr_min: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            lr_start: 1e-6,
            lr_peak: 1e-4,
            warmup_epochs: 5.0,
            total_epochs: 200.0,
            lr_min: 1e-6,
        }
    }
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_start <= self.lr_peak) {
            return Err(TrainError::Config(format!(
                "lr_start {} must not exceed lr_peak {}",
                self.lr_start, self.lr_peak
            )));
        }
        if !(self.warmup_epochs >= 0.0 && self.warmup_epochs < self.total_epochs) {
            return Err(TrainError::Config(format!(
                "warmup {} must lie in [0, total {})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.lr_min < 0.0 || self.lr_start < 0.0 {
            return Err(TrainError::Config("negative learning rate".into()));
        }
        Ok(())
    }
}

/// Learning rate at a (possibly fractional) epoch: linear interpolation from
/// `lr_start` to `lr_peak` over the warmup, then
/// lr_min + ½(lr_peak − lr_min)(1 + cos(π(epoch − warmup)/(total − warmup))).
/// Both branches give exactly `lr_peak` at the warmup boundary.
pub fn lr_at(epoch: f64, spec: &ScheduleSpec) -> Result<f64> {
    if !(0.0..=spec.total_epochs).contains(&epoch) {
        return Err(TrainError::EpochOutOfRange {
            epoch,
            total: spec.total_epochs,
        });
    }
    if epoch < spec.warmup_epochs {
        let frac = epoch / spec.warmup_epochs;
        Ok(spec.lr_start + (spec.lr_peak - spec.lr_start) * frac)
    } else {
        let frac = (epoch - spec.warmup_epochs) / (spec.total_epochs - spec.warmup_epochs);
        Ok(spec.lr_min
            + 0.5 * (spec.lr_peak - spec.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn schedule_hits_its_anchor_points() {
        let s = ScheduleSpec::default();
        assert_eq!(lr_at(0.0, &s).unwrap(), 1e-6);
        assert_eq!(lr_at(5.0, &s).unwrap(), 1e-4);
        assert_eq!(lr_at(200.0, &s).unwrap(), 1e-6);
        // Cosine midpoint sits exactly halfway between peak and floor.
        assert_relative_eq!(
            lr_at(102.5, &s).unwrap(),
            (1e-4 + 1e-6) / 2.0,
            epsilon = 1e-18
        );
    }

    #[test]
    fn schedule_is_continuous_at_the_warmup_boundary() {
        let s = ScheduleSpec::default();
        let linear_limit = s.lr_start + (s.lr_peak - s.lr_start) * 1.0;
        assert!((linear_limit - lr_at(s.warmup_epochs, &s).unwrap()).abs() < 1e-15);
        // Approach from below as well.
        let eps = 1e-9;
        let below = lr_at(s.warmup_epochs - eps, &s).unwrap();
        assert!((below - s.lr_peak).abs() < 1e-12);
    }

    #[test]
    fn schedule_is_monotone_within_each_phase() {
        let s = ScheduleSpec::default();
        let mut prev = lr_at(0.0, &s).unwrap();
        for k in 1..=50 {
            let e = 5.0 * k as f64 / 50.0;
            let lr = lr_at(e, &s).unwrap();
            assert!(lr >= prev);
            prev = lr;
        }
        for k in 1..=100 {
            let e = 5.0 + 195.0 * k as f64 / 100.0;
            let lr = lr_at(e, &s).unwrap();
            assert!(lr <= prev + 1e-18);
            prev = lr;
        }
    }

    #[test]
    fn schedule_rejects_out_of_range_epochs() {
        let s = ScheduleSpec::default();
        assert!(lr_at(-0.1, &s).is_err());
        assert!(lr_at(200.1, &s).is_err());
    }

    #[test]
    fn schedule_validation_catches_inverted_rates() {
        let mut s = ScheduleSpec::default();
        s.lr_start = 1e-3;
        assert!(s.validate().is_err());
        let mut s = ScheduleSpec::default();
        s.warmup_epochs = 200.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_warmup_starts_on_the_cosine() {
        let s = ScheduleSpec {
            warmup_epochs: 0.0,
            ..ScheduleSpec::default()
        };
        assert_eq!(lr_at(0.0, &s).unwrap(), s.lr_peak);
        assert_eq!(lr_at(200.0, &s).unwrap(), s.lr_min);
    }

    #[test]
    fn loss_weights_reject_negative_values() {
        let w = LossWeights {
            lambda_mse: -1.0,
            ..LossWeights::default()
        };
        assert!(w.validate().is_err());
    }
}
