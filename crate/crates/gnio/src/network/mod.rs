//! The displacement network: residual 1D encoder, motion-bank attention, and a
//! gated prediction head with a log-variance branch.
//!
//! A window of gravity-aligned samples X ∈ R^{N×6} is encoded into a feature
//! f ∈ R^D, cross-attended against a learned bank of m motion prototypes to get a
//! context c, fused as h = f + c, and decoded into three quantities: a nonnegative
//! scale s̃, a gate g, and a log-σ vector u. The displacement estimate is the
//! elementwise product d̂ = s̃ ∘ g; the covariance is diag(exp(2u)).

mod attention;
mod encoder;
mod head;

pub use head::HeadOut;

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    load_checkpoint, save_checkpoint, AutodiffError, CheckpointEntry, Tape, TensorId,
};
use crate::data::Window;
use encoder::EncoderPlan;

/// Activation for the gate branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateFn {
    Tanh,
    Sigmoid,
}

/// Activation for the scale branch. All except `linear` produce nonnegative output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFn {
    Softplus,
    /// ELU(x) + 1 with alpha = 1; positive everywhere.
    PosElu,
    Abs,
    Exp,
    /// Identity; may be negative. Used by ablations only.
    Linear,
}

/// Architecture description. `D` must equal the last stage width and be
/// divisible by `heads`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Feature dimension of the encoder output and attention space.
    #[serde(rename = "D")]
    pub d: usize,
    /// Number of motion prototypes in the bank.
    pub m: usize,
    pub heads: usize,
    /// Channel widths of the four residual stages.
    pub channels: [usize; 4],
    pub gate_fn: GateFn,
    pub scale_fn: ScaleFn,
}

impl NetConfig {
    /// Full-scale configuration (~4.9 M parameters).
    pub fn full() -> Self {
        Self {
            d: 512,
            m: 64,
            heads: 4,
            channels: [64, 128, 256, 512],
            gate_fn: GateFn::Tanh,
            scale_fn: ScaleFn::Softplus,
        }
    }

    /// Desk-scale configuration that trains in minutes on a single core.
    pub fn tiny() -> Self {
        Self {
            d: 64,
            m: 8,
            heads: 4,
            channels: [8, 16, 32, 64],
            gate_fn: GateFn::Tanh,
            scale_fn: ScaleFn::Softplus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(NetworkError::Config("bank size m must be >= 1".into()));
        }
        if self.heads < 1 {
            return Err(NetworkError::Config("heads must be >= 1".into()));
        }
        if self.d % self.heads != 0 {
            return Err(NetworkError::Config(format!(
                "D={} is not divisible by heads={}",
                self.d, self.heads
            )));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(NetworkError::Config(format!(
                "zero channel width in {:?}",
                self.channels
            )));
        }
        if self.d != self.channels[3] {
            return Err(NetworkError::Config(format!(
                "D={} must equal the last stage width {}",
                self.d, self.channels[3]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("network config: {0}")]
    Config(String),

    #[error("network input: {0}")]
    Input(String),

    #[error("checkpoint does not match architecture: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

/// One named parameter tensor.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Ordered collection of named tensors. Order is construction order and defines
/// checkpoint layout and optimizer state alignment.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    items: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(!self.index.contains_key(name), "duplicate param {name}");
        let idx = self.items.len();
        self.index.insert(name.to_string(), idx);
        self.items.push(Param {
            name: name.to_string(),
            shape,
            data,
        });
        idx
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.items[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.items[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.items[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.items.iter()
    }

    /// Total number of scalar values across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.items.iter().map(|p| p.data.len()).sum()
    }
}

/// Tape handles for every parameter, aligned with [`ParamSet`] order.
pub struct StagedParams {
    pub ids: Vec<TensorId>,
}

/// Tape handles of the interesting intermediate tensors of one forward pass.
pub struct ForwardIds {
    /// Encoder output f, shape [D].
    pub feature: TensorId,
    /// Attention context c, shape [1, D].
    pub context: TensorId,
    /// Fused h = f + c, shape [D].
    pub fused: TensorId,
    /// Scale branch output s̃, shape [3].
    pub scale: TensorId,
    /// Gate branch output g, shape [3].
    pub gate: TensorId,
    /// Displacement estimate d̂ = s̃ ∘ g, shape [3].
    pub displacement: TensorId,
    /// Log-σ vector u, shape [3].
    pub log_sigma: TensorId,
    /// Per-head attention weights, each shape [1, m].
    pub attention: Vec<TensorId>,
    /// Training-mode batchnorm outputs in plan order, for running-stat
    /// updates. Populated by [`GnioNet::forward`]; entries coming out of
    /// [`GnioNet::forward_batch`] leave this empty because the joint nodes
    /// are returned separately, once per batch.
    pub bn_nodes: Vec<TensorId>,
}

/// Plain-value outputs of an eval-mode forward pass.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub displacement: Vector3<f64>,
    /// Diagonal of Σ̂ = diag(exp(2u)).
    pub sigma_diag: Vector3<f64>,
    pub log_sigma: Vector3<f64>,
    pub gate: Vector3<f64>,
    pub scale: Vector3<f64>,
    /// Per-head attention weights over the m prototypes.
    pub attention: Vec<Vec<f64>>,
    pub feature: Vec<f64>,
}

/// The assembled network: encoder plan, bank and head parameters, batchnorm
/// running statistics.
pub struct GnioNet {
    pub config: NetConfig,
    pub params: ParamSet,
    /// Batchnorm running mean/var buffers, updated only by training.
    pub running: ParamSet,
    plan: EncoderPlan,
    bank: attention::BankIdx,
    head: head::HeadIdx,
}

impl GnioNet {
    /// Build a network with freshly initialized parameters. Deterministic in `seed`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        let mut running = ParamSet::default();
        let plan = EncoderPlan::build(&config, &mut params, &mut running, &mut rng);
        let bank = attention::BankIdx::build(&config, &mut params, &mut rng);
        let head = head::HeadIdx::build(&config, &mut params, &mut rng);
        Ok(Self {
            config,
            params,
            running,
            plan,
            bank,
            head,
        })
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Number of batchnorm layers (the length of `ForwardIds::bn_nodes`).
    pub fn bn_layer_count(&self) -> usize {
        self.plan.bn_count()
    }

    /// Put every trainable parameter on a tape. With `trainable` the leaves
    /// request gradients.
    pub fn stage(&self, tape: &mut Tape, trainable: bool) -> StagedParams {
        let ids = self
            .params
            .iter()
            .map(|p| {
                tape.leaf(&p.shape, p.data.clone(), trainable)
                    .expect("parameter shapes are consistent by construction")
            })
            .collect();
        StagedParams { ids }
    }

    /// Turn a window into the encoder input layout [6, N].
    pub fn window_input(&self, tape: &mut Tape, w: &Window) -> Result<TensorId> {
        input_from_rows(tape, &w.x, w.n)
    }

    /// Encoder alone: [6, N] input to [D] feature (plus batchnorm nodes).
    pub fn encode(
        &self,
        tape: &mut Tape,
        x: TensorId,
        staged: &StagedParams,
        train: bool,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        self.plan.forward(tape, x, staged, &self.running, train)
    }

    /// Attention alone: [D] feature to ([1, D] context, per-head weights).
    pub fn bank_attend(
        &self,
        tape: &mut Tape,
        feature: TensorId,
        staged: &StagedParams,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        self.bank.forward(tape, feature, staged, &self.config)
    }

    /// Prediction head alone: [D] fused feature to scale/gate/displacement/log-σ.
    pub fn decode_head(
        &self,
        tape: &mut Tape,
        fused: TensorId,
        staged: &StagedParams,
    ) -> Result<head::HeadOut> {
        self.head.forward(tape, fused, staged, &self.config)
    }

    /// Overwrite one parameter tensor by name. Lengths must match.
    pub fn set_param(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let idx = self
            .params
            .index
            .get(name)
            .copied()
            .ok_or_else(|| NetworkError::Config(format!("no parameter named '{name}'")))?;
        let p = self.params.get_mut(idx);
        if p.data.len() != data.len() {
            return Err(NetworkError::Config(format!(
                "parameter '{name}' has {} values, got {}",
                p.data.len(),
                data.len()
            )));
        }
        p.data = data;
        Ok(())
    }

    /// Batched forward pass on an existing tape. `train` selects batch
    /// statistics (and is required for gradients through batchnorm layers).
    /// Normalization statistics are shared across the whole batch; attention
    /// and the head run per window. Returns one set of output ids per window
    /// (their `bn_nodes` are empty) plus the joint batchnorm nodes in plan
    /// order, which training feeds to [`GnioNet::update_running_stats`].
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        xs: &[TensorId],
        staged: &StagedParams,
        train: bool,
    ) -> Result<(Vec<ForwardIds>, Vec<TensorId>)> {
        for &x in xs {
            let shape = tape.shape(x).to_vec();
            if shape.len() != 2 || shape[0] != 6 {
                return Err(NetworkError::Input(format!(
                    "encoder expects [6, N] input, got {shape:?}"
                )));
            }
        }
        let (features, bn_nodes) =
            self.plan
                .forward_batch(tape, xs, staged, &self.running, train)?;
        let mut out = Vec::with_capacity(features.len());
        for feature in features {
            let (context, attention) = self.bank.forward(tape, feature, staged, &self.config)?;
            let f_row = tape.reshape(feature, &[1, self.config.d])?;
            let h_row = tape.add(f_row, context)?;
            let fused = tape.reshape(h_row, &[self.config.d])?;
            let head = self.head.forward(tape, fused, staged, &self.config)?;
            out.push(ForwardIds {
                feature,
                context,
                fused,
                scale: head.scale,
                gate: head.gate,
                displacement: head.displacement,
                log_sigma: head.log_sigma,
                attention,
                bn_nodes: Vec::new(),
            });
        }
        Ok((out, bn_nodes))
    }

    /// Full forward pass over one window; see [`GnioNet::forward_batch`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: TensorId,
        staged: &StagedParams,
        train: bool,
    ) -> Result<ForwardIds> {
        let (mut ids, bn_nodes) = self.forward_batch(tape, &[x], staged, train)?;
        let mut only = ids.pop().expect("one window in, one output out");
        only.bn_nodes = bn_nodes;
        Ok(only)
    }

    /// Eval-mode forward pass over one window, returning plain values.
    pub fn predict(&self, window: &Window) -> Result<Prediction> {
        self.predict_rows(&window.x, window.n)
    }

    /// Eval-mode forward over raw N×6 rows.
    pub fn predict_rows(&self, rows: &[f64], n: usize) -> Result<Prediction> {
        let mut tape = Tape::new();
        let x = input_from_rows(&mut tape, rows, n)?;
        let staged = self.stage(&mut tape, false);
        let ids = self.forward(&mut tape, x, &staged, false)?;
        let v3 = |id: TensorId| {
            let d = tape.data(id);
            Vector3::new(d[0], d[1], d[2])
        };
        let u = v3(ids.log_sigma);
        Ok(Prediction {
            displacement: v3(ids.displacement),
            sigma_diag: u.map(|x| (2.0 * x).exp()),
            log_sigma: u,
            gate: v3(ids.gate),
            scale: v3(ids.scale),
            attention: ids
                .attention
                .iter()
                .map(|&a| tape.data(a).to_vec())
                .collect(),
            feature: tape.data(ids.feature).to_vec(),
        })
    }

    /// Blend fresh batch statistics into the running buffers:
    /// running = (1 − momentum) · running + momentum · batch.
    pub fn update_running_stats(&mut self, batch: &[(Vec<f64>, Vec<f64>)], momentum: f64) {
        assert_eq!(batch.len(), self.plan.bn_count());
        for (layer, (mean, var)) in batch.iter().enumerate() {
            let (mean_idx, var_idx) = self.plan.running_indices(layer);
            for (r, &b) in self
                .running
                .get_mut(mean_idx)
                .data
                .iter_mut()
                .zip(mean.iter())
            {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
            for (r, &b) in self
                .running
                .get_mut(var_idx)
                .data
                .iter_mut()
                .zip(var.iter())
            {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        }
    }

    /// Write every parameter and running buffer to a checkpoint file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let entries: Vec<CheckpointEntry> = self
            .params
            .iter()
            .chain(self.running.iter())
            .map(|p| CheckpointEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: p.data.clone(),
            })
            .collect();
        save_checkpoint(path, &entries)?;
        Ok(())
    }

    /// Load parameters and running buffers saved by [`GnioNet::save`]. The
    /// checkpoint must cover this architecture exactly.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let entries = load_checkpoint(path)?;
        let mut by_name: HashMap<&str, &CheckpointEntry> =
            entries.iter().map(|e| (e.name.as_str(), e)).collect();
        let mut fill = |set: &mut ParamSet| -> Result<()> {
            for i in 0..set.len() {
                let p = set.get_mut(i);
                let e = by_name.remove(p.name.as_str()).ok_or_else(|| {
                    NetworkError::CheckpointMismatch(format!("missing parameter '{}'", p.name))
                })?;
                if e.shape != p.shape {
                    return Err(NetworkError::CheckpointMismatch(format!(
                        "parameter '{}': checkpoint shape {:?}, architecture expects {:?}",
                        p.name, e.shape, p.shape
                    )));
                }
                p.data.clone_from(&e.data);
            }
            Ok(())
        };
        fill(&mut self.params)?;
        fill(&mut self.running)?;
        if let Some(extra) = by_name.keys().next() {
            return Err(NetworkError::CheckpointMismatch(format!(
                "checkpoint has {} parameters unknown to this architecture, e.g. '{extra}'",
                by_name.len()
            )));
        }
        Ok(())
    }
}

/// Transpose N×6 rows into the [6, N] channel-major encoder input.
fn input_from_rows(tape: &mut Tape, rows: &[f64], n: usize) -> Result<TensorId> {
    if rows.len() != n * 6 {
        return Err(NetworkError::Input(format!(
            "expected {n}×6 values, got {}",
            rows.len()
        )));
    }
    let mut data = vec![0.0; 6 * n];
    for i in 0..n {
        for c in 0..6 {
            data[c * n + i] = rows[i * 6 + c];
        }
    }
    Ok(tape.leaf(&[6, n], data, false)?)
}

/// Kaiming fan-in normal draw.
fn kaiming(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64, n: usize) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[cfg(test)]
mod tests;
