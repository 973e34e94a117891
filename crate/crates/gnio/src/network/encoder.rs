//! Residual 1D encoder: conv stem, four stages of two basic blocks, global
//! average pool. Stage widths come from the config; strides are 1/2/2/2 with a
//! stride-2 stem (kernel 7). Output dimension equals the last stage width.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BnMode, Tape, TensorId};
use super::{kaiming, ParamSet, Result, StagedParams};

const BN_EPS: f64 = 1e-5;

/// Indices of one convolution's kernel parameter and its geometry.
#[derive(Clone, Debug)]
struct ConvIdx {
    w: usize,
    stride: usize,
    pad: usize,
}

/// Indices of one batchnorm layer: trainable affine and running buffers.
#[derive(Clone, Debug)]
struct BnIdx {
    gamma: usize,
    beta: usize,
    run_mean: usize,
    run_var: usize,
    /// Position in the flat list of batchnorm layers (order of `bn_nodes`).
    layer: usize,
}

#[derive(Clone, Debug)]
struct BlockPlan {
    conv1: ConvIdx,
    bn1: BnIdx,
    conv2: ConvIdx,
    bn2: BnIdx,
    /// 1×1 projection on the skip path when shape changes.
    down: Option<(ConvIdx, BnIdx)>,
}

/// Fully resolved encoder: parameter indices for every layer.
pub struct EncoderPlan {
    stem_conv: ConvIdx,
    stem_bn: BnIdx,
    stages: Vec<Vec<BlockPlan>>,
    bn_layers: Vec<(usize, usize)>, // (run_mean, run_var) per bn layer, plan order
}

struct Builder<'a> {
    params: &'a mut ParamSet,
    running: &'a mut ParamSet,
    rng: &'a mut ChaCha8Rng,
    bn_layers: Vec<(usize, usize)>,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize, stride: usize) -> ConvIdx {
        let data = kaiming(self.rng, c_in * k, c_out * c_in * k);
        let w = self.params.push(name, vec![c_out, c_in, k], data);
        ConvIdx {
            w,
            stride,
            pad: k / 2,
        }
    }

    fn bn(&mut self, prefix: &str, c: usize) -> BnIdx {
        let gamma = self
            .params
            .push(&format!("{prefix}.gamma"), vec![c], vec![1.0; c]);
        let beta = self
            .params
            .push(&format!("{prefix}.beta"), vec![c], vec![0.0; c]);
        let run_mean = self
            .running
            .push(&format!("{prefix}.running_mean"), vec![c], vec![0.0; c]);
        let run_var = self
            .running
            .push(&format!("{prefix}.running_var"), vec![c], vec![1.0; c]);
        let layer = self.bn_layers.len();
        self.bn_layers.push((run_mean, run_var));
        BnIdx {
            gamma,
            beta,
            run_mean,
            run_var,
            layer,
        }
    }
}

impl EncoderPlan {
    pub fn build(
        config: &super::NetConfig,
        params: &mut ParamSet,
        running: &mut ParamSet,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut b = Builder {
            params,
            running,
            rng,
            bn_layers: Vec::new(),
        };
        let c = config.channels;
        let stem_conv = b.conv("enc.stem.conv.w", c[0], 6, 7, 2);
        let stem_bn = b.bn("enc.stem.bn", c[0]);
        let mut stages = Vec::with_capacity(4);
        let mut c_in = c[0];
        for (si, &c_out) in c.iter().enumerate() {
            let mut blocks = Vec::with_capacity(2);
            for bi in 0..2 {
                let stride = if si > 0 && bi == 0 { 2 } else { 1 };
                let prefix = format!("enc.s{si}.b{bi}");
                let conv1 = b.conv(&format!("{prefix}.conv1.w"), c_out, c_in, 3, stride);
                let bn1 = b.bn(&format!("{prefix}.bn1"), c_out);
                let conv2 = b.conv(&format!("{prefix}.conv2.w"), c_out, c_out, 3, 1);
                let bn2 = b.bn(&format!("{prefix}.bn2"), c_out);
                let down = if stride != 1 || c_in != c_out {
                    let dc = b.conv(&format!("{prefix}.down.conv.w"), c_out, c_in, 1, stride);
                    let dbn = b.bn(&format!("{prefix}.down.bn"), c_out);
                    Some((dc, dbn))
                } else {
                    None
                };
                blocks.push(BlockPlan {
                    conv1,
                    bn1,
                    conv2,
                    bn2,
                    down,
                });
                c_in = c_out;
            }
            stages.push(blocks);
        }
        EncoderPlan {
            stem_conv,
            stem_bn,
            stages,
            bn_layers: b.bn_layers,
        }
    }

    pub fn bn_count(&self) -> usize {
        self.bn_layers.len()
    }

    /// Running-buffer indices (mean, var) of the given batchnorm layer.
    pub fn running_indices(&self, layer: usize) -> (usize, usize) {
        self.bn_layers[layer]
    }

    fn apply_bn(
        &self,
        tape: &mut Tape,
        hs: Vec<TensorId>,
        bn: &BnIdx,
        staged: &StagedParams,
        running: &ParamSet,
        train: bool,
        bn_nodes: &mut Vec<TensorId>,
    ) -> Result<Vec<TensorId>> {
        let mode = if train {
            BnMode::Train
        } else {
            BnMode::Eval {
                mean: running.get(bn.run_mean).data.clone(),
                var: running.get(bn.run_var).data.clone(),
            }
        };
        debug_assert_eq!(bn_nodes.len(), bn.layer);
        if hs.len() == 1 {
            let y = tape.batchnorm1d(hs[0], staged.ids[bn.gamma], staged.ids[bn.beta], BN_EPS, mode)?;
            bn_nodes.push(y);
            return Ok(vec![y]);
        }
        // Statistics are shared across the whole batch: concatenate along the
        // time axis, normalize once, split back so the next convolution sees
        // each window's own boundaries.
        let widths: Vec<usize> = hs.iter().map(|&h| tape.shape(h)[1]).collect();
        let joint = tape.concat_cols(&hs)?;
        let y = tape.batchnorm1d(joint, staged.ids[bn.gamma], staged.ids[bn.beta], BN_EPS, mode)?;
        bn_nodes.push(y);
        let mut out = Vec::with_capacity(hs.len());
        let mut off = 0;
        for w in widths {
            out.push(tape.slice_cols(y, off, off + w)?);
            off += w;
        }
        Ok(out)
    }

    /// Run the encoder over a batch of windows. Convolutions act on each
    /// window separately (padding must not bleed across windows), but every
    /// batchnorm layer computes its statistics over the whole batch jointly,
    /// which is what the running buffers estimate for eval mode. Returns the
    /// pooled feature per window and the joint batchnorm output nodes in plan
    /// order.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        xs: &[TensorId],
        staged: &StagedParams,
        running: &ParamSet,
        train: bool,
    ) -> Result<(Vec<TensorId>, Vec<TensorId>)> {
        let mut bn_nodes = Vec::with_capacity(self.bn_count());
        let mut hs = Vec::with_capacity(xs.len());
        for &x in xs {
            hs.push(tape.conv1d(
                x,
                staged.ids[self.stem_conv.w],
                self.stem_conv.stride,
                self.stem_conv.pad,
            )?);
        }
        hs = self.apply_bn(tape, hs, &self.stem_bn, staged, running, train, &mut bn_nodes)?;
        for h in &mut hs {
            *h = tape.relu(*h);
        }
        for blocks in &self.stages {
            for blk in blocks {
                // Main path first, then skip: keeps batchnorm application in
                // plan order (bn1, bn2, down).
                let mut ys = Vec::with_capacity(hs.len());
                for &h in &hs {
                    ys.push(tape.conv1d(h, staged.ids[blk.conv1.w], blk.conv1.stride, blk.conv1.pad)?);
                }
                ys = self.apply_bn(tape, ys, &blk.bn1, staged, running, train, &mut bn_nodes)?;
                for y in &mut ys {
                    *y = tape.relu(*y);
                }
                let mut y2 = Vec::with_capacity(hs.len());
                for &y in &ys {
                    y2.push(tape.conv1d(y, staged.ids[blk.conv2.w], blk.conv2.stride, blk.conv2.pad)?);
                }
                y2 = self.apply_bn(tape, y2, &blk.bn2, staged, running, train, &mut bn_nodes)?;
                let skips = match &blk.down {
                    Some((dc, dbn)) => {
                        let mut ss = Vec::with_capacity(hs.len());
                        for &h in &hs {
                            ss.push(tape.conv1d(h, staged.ids[dc.w], dc.stride, dc.pad)?);
                        }
                        self.apply_bn(tape, ss, dbn, staged, running, train, &mut bn_nodes)?
                    }
                    None => hs.clone(),
                };
                let mut next = Vec::with_capacity(hs.len());
                for (&y, &s) in y2.iter().zip(&skips) {
                    let sum = tape.add(y, s)?;
                    next.push(tape.relu(sum));
                }
                hs = next;
            }
        }
        let mut feats = Vec::with_capacity(hs.len());
        for &h in &hs {
            feats.push(tape.gap(h)?);
        }
        Ok((feats, bn_nodes))
    }

    /// Single-window encoder pass; see [`EncoderPlan::forward_batch`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: TensorId,
        staged: &StagedParams,
        running: &ParamSet,
        train: bool,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        let (mut feats, bn_nodes) = self.forward_batch(tape, &[x], staged, running, train)?;
        Ok((feats.pop().expect("one window in, one feature out"), bn_nodes))
    }
}
