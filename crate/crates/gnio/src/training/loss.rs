//! Loss terms, both as plain values and as tape graphs.
//!
//! Per window, with residual e = d_gt − d̂ and log-σ vector u:
//!   MSE  = ‖e‖²
//!   NLL  = Σ_i [ e_i² / (2 exp(2u_i)) + u_i ]   (constant term dropped)
//! Batch losses are means over windows; the total is
//!   λ_MSE · L_MSE + λ_NLL · L_NLL.

use nalgebra::Vector3;

use super::{LossWeights, Result};
use crate::autodiff::{Tape, TensorId};

/// Mean of ‖d_gt − d̂‖² over the batch.
pub fn loss_mse(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> f64 {
    let n = pairs.len().max(1) as f64;
    pairs
        .iter()
        .map(|(gt, hat)| (gt - hat).norm_squared())
        .sum::<f64>()
        / n
}

/// One window's likelihood term.
pub fn nll_one(d_gt: &Vector3<f64>, d_hat: &Vector3<f64>, u: &Vector3<f64>) -> f64 {
    let e = d_gt - d_hat;
    (0..3)
        .map(|i| e[i] * e[i] / (2.0 * (2.0 * u[i]).exp()) + u[i])
        .sum()
}

/// Mean of the likelihood term over the batch.
pub fn loss_nll(triples: &[(Vector3<f64>, Vector3<f64>, Vector3<f64>)]) -> f64 {
    let n = triples.len().max(1) as f64;
    triples
        .iter()
        .map(|(gt, hat, u)| nll_one(gt, hat, u))
        .sum::<f64>()
        / n
}

/// Weighted sum of the two batch means.
pub fn loss_total(mse: f64, nll: f64, weights: &LossWeights) -> f64 {
    weights.lambda_mse * mse + weights.lambda_nll * nll
}

/// Tape nodes of one window's loss terms, each shape [1].
pub struct WindowLossIds {
    pub mse: TensorId,
    pub nll: TensorId,
}

/// Build both per-window loss terms on the tape.
pub fn window_loss(
    tape: &mut Tape,
    displacement: TensorId,
    log_sigma: TensorId,
    d_gt: &Vector3<f64>,
) -> Result<WindowLossIds> {
    let target = tape.leaf(&[3], vec![d_gt.x, d_gt.y, d_gt.z], false)?;
    let e = tape.sub(displacement, target)?;
    let e2 = tape.mul(e, e)?;
    let mse = tape.sum(e2);
    // e² · ½ exp(−2u) + u, summed over the three axes.
    let neg2u = tape.affine_scalar(log_sigma, -2.0, 0.0);
    let inv_var = tape.exp(neg2u);
    let half_inv = tape.affine_scalar(inv_var, 0.5, 0.0);
    let quad = tape.mul(e2, half_inv)?;
    let inner = tape.add(quad, log_sigma)?;
    let nll = tape.sum(inner);
    Ok(WindowLossIds { mse, nll })
}

/// Combine per-window losses into batch means and the weighted total. When
/// `nll_active` is false the likelihood term enters with weight zero, so its
/// gradient contribution vanishes exactly.
pub fn batch_total(
    tape: &mut Tape,
    windows: &[WindowLossIds],
    weights: &LossWeights,
    nll_active: bool,
) -> Result<(TensorId, TensorId, TensorId)> {
    assert!(!windows.is_empty());
    let inv_n = 1.0 / windows.len() as f64;
    let mut mse_sum = windows[0].mse;
    let mut nll_sum = windows[0].nll;
    for w in &windows[1..] {
        mse_sum = tape.add(mse_sum, w.mse)?;
        nll_sum = tape.add(nll_sum, w.nll)?;
    }
    let mse_mean = tape.affine_scalar(mse_sum, inv_n, 0.0);
    let nll_mean = tape.affine_scalar(nll_sum, inv_n, 0.0);
    let lambda_nll = if nll_active { weights.lambda_nll } else { 0.0 };
    let a = tape.affine_scalar(mse_mean, weights.lambda_mse, 0.0);
    let b = tape.affine_scalar(nll_mean, lambda_nll, 0.0);
    let total = tape.add(a, b)?;
    Ok((total, mse_mean, nll_mean))
}
