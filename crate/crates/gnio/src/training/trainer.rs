//! The batch training loop.
//!
//! Each batch runs on a fresh tape: parameters are staged once, every window's
//! forward pass and loss terms are recorded on the same tape, and one backward
//! pass accumulates the batch-mean gradient. Updates are strictly sequential,
//! so a run is bit-reproducible from (seed, dataset, config).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_global_norm, AdamState};
use super::loss::{batch_total, window_loss};
use super::{lr_at, LossWeights, Result, ScheduleSpec, TrainError};
use crate::autodiff::Tape;
use crate::data::Window;
use crate::network::GnioNet;

/// Windows whose ground-truth displacement is below this are treated as
/// stationary when aggregating gate statistics.
pub const STATIONARY_THRESHOLD_M: f64 = 0.01;

/// Running-statistics EMA momentum, applied once per batch.
const BN_MOMENTUM: f64 = 0.1;

/// The divergence guard aborts when the loss is non-finite or beyond this
/// bound; the bound catches a blow-up before any value actually overflows.
const LOSS_BOUND: f64 = 1e30;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch: usize,
    pub epochs: usize,
    pub schedule: ScheduleSpec,
    pub loss: LossWeights,
    /// Gradients are rescaled when their global norm exceeds this.
    pub clip_norm: f64,
    /// Checkpoint cadence in epochs; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Desk-scale defaults: the schedule anneals over the actual run length
        // instead of the full-scale 200 epochs.
        Self {
            seed: 0,
            batch: 64,
            epochs: 50,
            schedule: ScheduleSpec {
                total_epochs: 50.0,
                ..ScheduleSpec::default()
            },
            loss: LossWeights::default(),
            clip_norm: 10.0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(TrainError::Config("batch size must be >= 1".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TrainError::Config(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            )));
        }
        self.loss.validate()?;
        self.schedule.validate()?;
        if self.epochs as f64 > self.schedule.total_epochs {
            return Err(TrainError::Config(format!(
                "epochs {} exceed the schedule's total {}",
                self.epochs, self.schedule.total_epochs
            )));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_mse: f64,
    pub loss_nll: f64,
    pub gate_abs_mean_stationary: f64,
    pub gate_abs_mean_moving: f64,
}

/// Write the log as CSV with one row per epoch.
pub fn write_train_log(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "lr",
        "loss_total",
        "loss_mse",
        "loss_nll",
        "gate_abs_mean_stationary",
        "gate_abs_mean_moving",
    ])?;
    for l in logs {
        w.write_record([
            l.epoch.to_string(),
            l.lr.to_string(),
            l.loss_total.to_string(),
            l.loss_mse.to_string(),
            l.loss_nll.to_string(),
            l.gate_abs_mean_stationary.to_string(),
            l.gate_abs_mean_moving.to_string(),
        ])?;
    }
    w.flush().map_err(TrainError::Io)?;
    Ok(())
}

/// Read a log written by [`write_train_log`], e.g. to resume a run.
pub fn read_train_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut logs = Vec::new();
    for record in r.records() {
        let rec = record?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| TrainError::Config(format!("log row too short: {rec:?}")))?
                .parse::<f64>()
                .map_err(|e| TrainError::Config(format!("log field {i}: {e}")))
        };
        logs.push(EpochLog {
            epoch: field(0)? as usize,
            lr: field(1)?,
            loss_total: field(2)?,
            loss_mse: field(3)?,
            loss_nll: field(4)?,
            gate_abs_mean_stationary: field(5)?,
            gate_abs_mean_moving: field(6)?,
        });
    }
    Ok(logs)
}

/// Train in place for `config.epochs` epochs, starting the schedule at
/// `start_epoch` (nonzero when resuming). The callback runs after every epoch
/// and may persist checkpoints.
pub fn train<F>(
    net: &mut GnioNet,
    windows: &[Window],
    config: &TrainConfig,
    start_epoch: usize,
    mut on_epoch: F,
) -> Result<Vec<EpochLog>>
where
    F: FnMut(&EpochLog, &GnioNet) -> Result<()>,
{
    config.validate()?;
    if windows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    // Burn the shuffles of completed epochs so a resumed run sees the same
    // batch order it would have seen uninterrupted.
    for _ in 0..start_epoch {
        order.shuffle(&mut rng);
    }
    let mut adam = AdamState::new(&net.params);
    let mut logs = Vec::new();
    for epoch in start_epoch..config.epochs {
        let lr = lr_at(epoch as f64, &config.schedule)?;
        order.shuffle(&mut rng);
        let nll_active = epoch >= config.loss.nll_delay_epochs;
        let mut mse_sum = 0.0;
        let mut nll_sum = 0.0;
        // (sum of mean |g|, window count), indexed moving = 0 / stationary = 1.
        let mut gate = [(0.0, 0usize); 2];
        for (batch_idx, chunk) in order.chunks(config.batch).enumerate() {
            let mut tape = Tape::new();
            let staged = net.stage(&mut tape, true);
            let mut xs = Vec::with_capacity(chunk.len());
            for &wi in chunk {
                xs.push(net.window_input(&mut tape, &windows[wi])?);
            }
            let (batch_ids, bn_nodes) = net.forward_batch(&mut tape, &xs, &staged, true)?;
            let mut per_window = Vec::with_capacity(chunk.len());
            for (ids, &wi) in batch_ids.iter().zip(chunk) {
                let w = &windows[wi];
                let g = tape.data(ids.gate);
                let abs_mean = (g[0].abs() + g[1].abs() + g[2].abs()) / 3.0;
                let class = usize::from(w.is_stationary(STATIONARY_THRESHOLD_M));
                gate[class].0 += abs_mean;
                gate[class].1 += 1;
                per_window.push(window_loss(
                    &mut tape,
                    ids.displacement,
                    ids.log_sigma,
                    &w.d_gt,
                )?);
            }
            // The joint batchnorm nodes already carry the batch statistics;
            // read them before backward consumes the graph.
            let bn_batch: Vec<(Vec<f64>, Vec<f64>)> = bn_nodes
                .iter()
                .map(|&node| {
                    let (m, v) = tape.batchnorm_stats(node).expect("train mode saves stats");
                    (m.to_vec(), v.to_vec())
                })
                .collect();
            let (total, mse_mean, nll_mean) =
                batch_total(&mut tape, &per_window, &config.loss, nll_active)?;
            let total_value = tape.value(total);
            if !total_value.is_finite() || total_value.abs() > LOSS_BOUND {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            mse_sum += tape.value(mse_mean) * chunk.len() as f64;
            nll_sum += tape.value(nll_mean) * chunk.len() as f64;
            tape.backward(total)?;
            let mut grads: Vec<Vec<f64>> = staged
                .ids
                .iter()
                .enumerate()
                .map(|(i, &id)| {
                    tape.grad(id)
                        .map(|g| g.to_vec())
                        .unwrap_or_else(|| vec![0.0; net.params.get(i).data.len()])
                })
                .collect();
            clip_global_norm(&mut grads, config.clip_norm);
            adam.step(&mut net.params, &grads, lr);
            net.update_running_stats(&bn_batch, BN_MOMENTUM);
        }
        let n = windows.len() as f64;
        let loss_mse = mse_sum / n;
        let loss_nll = nll_sum / n;
        let lambda_nll = if nll_active { config.loss.lambda_nll } else { 0.0 };
        let mean_of = |(sum, count): (f64, usize)| {
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        };
        let log = EpochLog {
            epoch,
            lr,
            loss_total: config.loss.lambda_mse * loss_mse + lambda_nll * loss_nll,
            loss_mse,
            loss_nll,
            gate_abs_mean_stationary: mean_of(gate[1]),
            gate_abs_mean_moving: mean_of(gate[0]),
        };
        on_epoch(&log, net)?;
        logs.push(log);
    }
    Ok(logs)
}

/// Mean of ‖d_gt − d̂‖² over a dataset, eval mode.
pub fn dataset_mse(net: &GnioNet, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut sum = 0.0;
    for w in windows {
        let p = net.predict(w)?;
        sum += (w.d_gt - p.displacement).norm_squared();
    }
    Ok(sum / windows.len() as f64)
}

/// Eval-mode gate and displacement statistics split by stationarity.
#[derive(Clone, Copy, Debug)]
pub struct GateStats {
    pub gate_abs_stationary: f64,
    pub gate_abs_moving: f64,
    pub disp_norm_stationary: f64,
    pub disp_norm_moving: f64,
    pub n_stationary: usize,
    pub n_moving: usize,
}

pub fn dataset_gate_stats(net: &GnioNet, windows: &[Window]) -> Result<GateStats> {
    if windows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut acc = [(0.0, 0.0, 0usize); 2]; // (|g| sum, ‖d̂‖ sum, count), moving = 0
    for w in windows {
        let p = net.predict(w)?;
        let class = usize::from(w.is_stationary(STATIONARY_THRESHOLD_M));
        acc[class].0 += p.gate.map(f64::abs).mean();
        acc[class].1 += p.displacement.norm();
        acc[class].2 += 1;
    }
    let mean = |sum: f64, n: usize| if n == 0 { f64::NAN } else { sum / n as f64 };
    Ok(GateStats {
        gate_abs_stationary: mean(acc[1].0, acc[1].2),
        gate_abs_moving: mean(acc[0].0, acc[0].2),
        disp_norm_stationary: mean(acc[1].1, acc[1].2),
        disp_norm_moving: mean(acc[0].1, acc[0].2),
        n_stationary: acc[1].2,
        n_moving: acc[0].2,
    })
}
