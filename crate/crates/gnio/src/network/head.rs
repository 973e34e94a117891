//! Gated prediction head and log-variance branch.
//!
//! Three parallel affine maps D→3 decode the fused feature: a scale branch
//! passed through a nonnegative activation, a gate branch squashed to [−1, 1]
//! (tanh) or [0, 1] (sigmoid), and a log-σ branch left raw. The displacement is
//! the elementwise product d̂ = s̃ ∘ g: the gate decides sign and activation,
//! the scale decides magnitude, and a zero gate silences the output entirely.

use rand_chacha::ChaCha8Rng;

use super::{kaiming, GateFn, NetConfig, ParamSet, Result, ScaleFn, StagedParams};
use crate::autodiff::{Tape, TensorId};

/// Cap on the exp-scale pre-activation and on |log σ|. e³⁰ meters is far
/// beyond any physical displacement or uncertainty, so the caps only bind in
/// pathological regimes (an undertrained or diverging network) where the raw
/// exponentials would overflow to infinity and poison downstream math.
const EXP_ARG_LIMIT: f64 = 30.0;

pub struct HeadIdx {
    ws: usize,
    bs: usize,
    wg: usize,
    bg: usize,
    wu: usize,
    bu: usize,
}

pub struct HeadOut {
    pub scale: TensorId,
    pub gate: TensorId,
    pub displacement: TensorId,
    pub log_sigma: TensorId,
}

impl HeadIdx {
    pub fn build(config: &NetConfig, params: &mut ParamSet, rng: &mut ChaCha8Rng) -> Self {
        let d = config.d;
        let mut linear = |w_name: &str, b_name: &str| {
            let w = params.push(w_name, vec![3, d], kaiming(rng, d, 3 * d));
            // Zero biases; in particular the gate starts centered (suppressing).
            let b = params.push(b_name, vec![3], vec![0.0; 3]);
            (w, b)
        };
        let (ws, bs) = linear("head.scale.w", "head.scale.b");
        let (wg, bg) = linear("head.gate.w", "head.gate.b");
        let (wu, bu) = linear("head.logvar.w", "head.logvar.b");
        Self {
            ws,
            bs,
            wg,
            bg,
            wu,
            bu,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        fused: TensorId,
        staged: &StagedParams,
        config: &NetConfig,
    ) -> Result<HeadOut> {
        let s_pre = tape.affine(staged.ids[self.ws], fused, staged.ids[self.bs])?;
        let scale = match config.scale_fn {
            ScaleFn::Softplus => tape.softplus(s_pre),
            ScaleFn::PosElu => {
                let e = tape.elu(s_pre, 1.0);
                tape.affine_scalar(e, 1.0, 1.0)
            }
            ScaleFn::Abs => tape.abs(s_pre),
            // exp(min(z, limit)): identical value and gradient below the cap.
            ScaleFn::Exp => {
                let capped = min_const(tape, s_pre, EXP_ARG_LIMIT);
                tape.exp(capped)
            }
            ScaleFn::Linear => s_pre,
        };
        let g_pre = tape.affine(staged.ids[self.wg], fused, staged.ids[self.bg])?;
        let gate = match config.gate_fn {
            GateFn::Tanh => tape.tanh(g_pre),
            GateFn::Sigmoid => tape.sigmoid(g_pre),
        };
        let displacement = tape.mul(scale, gate)?;
        let u_raw = tape.affine(staged.ids[self.wu], fused, staged.ids[self.bu])?;
        let log_sigma = clamp_const(tape, u_raw, EXP_ARG_LIMIT)?;
        Ok(HeadOut {
            scale,
            gate,
            displacement,
            log_sigma,
        })
    }
}

/// min(x, c) built from existing primitives: c − relu(c − x).
fn min_const(tape: &mut Tape, x: TensorId, c: f64) -> TensorId {
    let flipped = tape.affine_scalar(x, -1.0, c);
    let r = tape.relu(flipped);
    tape.affine_scalar(r, -1.0, c)
}

/// clamp(x, −c, c) built from existing primitives: −c + relu(x + c) − relu(x − c).
fn clamp_const(tape: &mut Tape, x: TensorId, c: f64) -> Result<TensorId> {
    let lo = tape.affine_scalar(x, 1.0, c);
    let rlo = tape.relu(lo);
    let hi = tape.affine_scalar(x, 1.0, -c);
    let rhi = tape.relu(hi);
    let diff = tape.sub(rlo, rhi)?;
    Ok(tape.affine_scalar(diff, 1.0, -c))
}
