//! Motion-bank cross attention.
//!
//! The bank M is an m×D matrix of learnable motion prototypes. The window
//! feature queries it: c = Softmax((f W_Q)(M W_K)ᵀ / √d_k)(M W_V), computed per
//! head over D/heads-wide slices. With a single head this is exactly the scaled
//! dot-product form above and no output projection is applied; with several
//! heads the concatenated head outputs pass through W_O.

use rand_chacha::ChaCha8Rng;

use super::{gaussian, kaiming, NetConfig, ParamSet, Result, StagedParams};
use crate::autodiff::{Tape, TensorId};

/// Parameter indices of the bank and its projections.
pub struct BankIdx {
    m: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: Option<usize>,
}

impl BankIdx {
    pub fn build(config: &NetConfig, params: &mut ParamSet, rng: &mut ChaCha8Rng) -> Self {
        let d = config.d;
        let m = params.push(
            "bank.m",
            vec![config.m, d],
            gaussian(rng, 1.0 / (d as f64).sqrt(), config.m * d),
        );
        let mut proj = |name: &str| params.push(name, vec![d, d], kaiming(rng, d, d * d));
        let wq = proj("bank.wq");
        let wk = proj("bank.wk");
        let wv = proj("bank.wv");
        let wo = (config.heads > 1).then(|| proj("bank.wo"));
        Self { m, wq, wk, wv, wo }
    }

    /// Attend the feature vector over the bank. Returns the context row [1, D]
    /// and one attention-weight tensor [1, m] per head.
    pub fn forward(
        &self,
        tape: &mut Tape,
        feature: TensorId,
        staged: &StagedParams,
        config: &NetConfig,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        let d = config.d;
        let dk = d / config.heads;
        let f_row = tape.reshape(feature, &[1, d])?;
        let q = tape.matmul(f_row, staged.ids[self.wq], false, false)?;
        let k = tape.matmul(staged.ids[self.m], staged.ids[self.wk], false, false)?;
        let v = tape.matmul(staged.ids[self.m], staged.ids[self.wv], false, false)?;
        let mut heads = Vec::with_capacity(config.heads);
        let mut weights = Vec::with_capacity(config.heads);
        for hi in 0..config.heads {
            let (lo, hi_col) = (hi * dk, (hi + 1) * dk);
            let qh = tape.slice_cols(q, lo, hi_col)?;
            let kh = tape.slice_cols(k, lo, hi_col)?;
            let vh = tape.slice_cols(v, lo, hi_col)?;
            let scores = tape.matmul(qh, kh, false, true)?;
            let scaled = tape.affine_scalar(scores, 1.0 / (dk as f64).sqrt(), 0.0);
            let attn = tape.softmax(scaled)?;
            let ctx = tape.matmul(attn, vh, false, false)?;
            heads.push(ctx);
            weights.push(attn);
        }
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        let context = match self.wo {
            Some(wo) => tape.matmul(cat, staged.ids[wo], false, false)?,
            None => cat,
        };
        Ok((context, weights))
    }
}
