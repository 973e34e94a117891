//! Gravity-aligned window extraction and displacement targets.

use nalgebra::{Rotation3, Vector3};

use super::{DataError, ImuSample, PoseSample, Result, Sequence, Window};
use crate::geometry::{orthonormality_defect, rot_z, yaw_of, yaw_rotation};

/// Rotate raw samples into the gravity-aligned, heading-free frame.
///
/// Each measurement has the bias removed and is rotated by R_γᵀ R_wb: the body
/// attitude with its yaw component stripped. The output keeps the z axis along
/// gravity while discarding global heading, so two recordings differing only in
/// heading produce identical blocks. Rows are [ax, ay, az, wx, wy, wz].
pub fn gravity_align(
    samples: &[ImuSample],
    r_wb: &Rotation3<f64>,
    bias_g: &Vector3<f64>,
    bias_a: &Vector3<f64>,
) -> Result<Vec<f64>> {
    let defect = orthonormality_defect(r_wb);
    if defect > 1e-6 {
        return Err(DataError::NonOrthonormal(defect));
    }
    let (r_gamma, _degenerate) = yaw_rotation(r_wb);
    let align = r_gamma.inverse() * r_wb;
    let mut out = Vec::with_capacity(samples.len() * 6);
    for s in samples {
        let a = align * (s.accel - bias_a);
        let w = align * (s.gyro - bias_g);
        out.extend_from_slice(&[a.x, a.y, a.z, w.x, w.y, w.z]);
    }
    Ok(out)
}

/// Ground-truth displacement over [t_start, t_end] expressed in the yaw frame of
/// the window start: d = R_γᵀ (p(t_end) − p(t_start)).
pub fn compute_target(
    gt: &[PoseSample],
    t_start: f64,
    t_end: f64,
    yaw: f64,
    max_gap: f64,
) -> Result<Vector3<f64>> {
    let a = super::interpolate_pose(gt, t_start, max_gap)?;
    let b = super::interpolate_pose(gt, t_end, max_gap)?;
    Ok(rot_z(yaw).inverse() * (b.position - a.position))
}

/// Cut a sequence into overlapping windows of `duration` seconds every `stride`
/// seconds, aligned with the ground-truth orientation at each window start.
///
/// The sample count N = duration×rate and hop S = stride×rate must both be whole
/// numbers of samples. Bias correction uses the generator's true bias when the
/// sequence carries one, otherwise zero.
pub fn window_stream(seq: &Sequence, duration: f64, stride: f64) -> Result<Vec<Window>> {
    if seq.imu.is_empty() {
        return Err(DataError::Windowing("empty sequence".into()));
    }
    let n_f = duration * seq.rate;
    let s_f = stride * seq.rate;
    if (n_f - n_f.round()).abs() > 1e-9 || (s_f - s_f.round()).abs() > 1e-9 {
        return Err(DataError::Windowing(format!(
            "rate {} Hz times duration {duration} s / stride {stride} s must be whole samples (got {n_f} / {s_f})",
            seq.rate
        )));
    }
    let n = n_f.round() as usize;
    let s = s_f.round() as usize;
    if n == 0 || s == 0 {
        return Err(DataError::Windowing(format!(
            "window of {n} samples with hop {s} is degenerate"
        )));
    }
    if seq.imu.len() < n {
        return Err(DataError::Windowing(format!(
            "sequence of {} samples is shorter than one window ({n} samples)",
            seq.imu.len()
        )));
    }
    let (bias_g, bias_a) = seq.bias_gt.unwrap_or((Vector3::zeros(), Vector3::zeros()));
    let period = 1.0 / seq.rate;
    let count = (seq.imu.len() - n) / s + 1;
    let mut windows = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * s;
        let t_start = seq.imu[start].t;
        let t_end = t_start + duration;
        let pose = super::interpolate_pose(&seq.gt, t_start, period)?;
        let r_wb = pose.orientation.to_rotation_matrix();
        let (r_gamma, degenerate) = yaw_rotation(&r_wb);
        let yaw = if degenerate { 0.0 } else { yaw_of(&r_gamma) };
        let x = gravity_align(&seq.imu[start..start + n], &r_wb, &bias_g, &bias_a)?;
        let d_gt = compute_target(&seq.gt, t_start, t_end, yaw, period)?;
        windows.push(Window {
            x,
            n,
            d_gt,
            yaw,
            t_start,
            t_end,
        });
    }
    Ok(windows)
}
