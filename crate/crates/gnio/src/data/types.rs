use nalgebra::{UnitQuaternion, Vector3};

use super::{DataError, Result};

/// One inertial measurement: body-frame angular rate and specific force.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Angular rate, rad/s.
    pub gyro: Vector3<f64>,
    /// Specific force, m/s².
    pub accel: Vector3<f64>,
}

/// One ground-truth pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// An IMU stream with ground truth on the same timeline.
#[derive(Clone, Debug, Default)]
pub struct Sequence {
    /// Sample rate in Hz.
    pub rate: f64,
    pub imu: Vec<ImuSample>,
    pub gt: Vec<PoseSample>,
    /// True (gyro, accel) biases when the sequence came from the generator.
    pub bias_gt: Option<(Vector3<f64>, Vector3<f64>)>,
}

impl Sequence {
    /// Check rate consistency, monotone timestamps and quaternion norms.
    pub fn validate(&self) -> Result<()> {
        if self.imu.is_empty() {
            return Err(DataError::InvalidSequence("no IMU samples".into()));
        }
        if !(self.rate > 0.0) {
            return Err(DataError::InvalidSequence(format!(
                "non-positive rate {}",
                self.rate
            )));
        }
        let dt = 1.0 / self.rate;
        for pair in self.imu.windows(2) {
            let step = pair[1].t - pair[0].t;
            if step <= 0.0 {
                return Err(DataError::InvalidSequence(format!(
                    "timestamps not strictly increasing at t={}",
                    pair[0].t
                )));
            }
            if (step - dt).abs() > 1e-6 {
                return Err(DataError::InvalidSequence(format!(
                    "sample jitter {:.3e} s at t={} exceeds 1e-6 s for declared rate {} Hz",
                    (step - dt).abs(),
                    pair[0].t,
                    self.rate
                )));
            }
        }
        for s in &self.imu {
            if !(s.t.is_finite() && s.gyro.iter().all(|v| v.is_finite()) && s.accel.iter().all(|v| v.is_finite())) {
                return Err(DataError::InvalidSequence(format!(
                    "non-finite IMU sample at t={}",
                    s.t
                )));
            }
        }
        for pair in self.gt.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(DataError::InvalidSequence(format!(
                    "ground-truth timestamps not strictly increasing at t={}",
                    pair[0].t
                )));
            }
        }
        for p in &self.gt {
            if (p.orientation.norm() - 1.0).abs() > 1e-9 {
                return Err(DataError::InvalidSequence(format!(
                    "quaternion norm {} at t={} deviates from 1",
                    p.orientation.norm(),
                    p.t
                )));
            }
        }
        Ok(())
    }

    /// Duration covered by the IMU stream, in seconds.
    pub fn duration(&self) -> f64 {
        match (self.imu.first(), self.imu.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Pose at time `t`, linearly interpolated in position and slerped in orientation.
///
/// `max_gap` bounds the spacing of the bracketing poses; a larger gap means the
/// ground truth is missing samples and interpolating across it would hide that.
pub fn interpolate_pose(gt: &[PoseSample], t: f64, max_gap: f64) -> Result<PoseSample> {
    const EDGE_TOL: f64 = 1e-9;
    if gt.is_empty() {
        return Err(DataError::OutOfRange {
            t,
            lo: f64::NAN,
            hi: f64::NAN,
        });
    }
    let (lo, hi) = (gt[0].t, gt[gt.len() - 1].t);
    if t < lo - EDGE_TOL || t > hi + EDGE_TOL {
        return Err(DataError::OutOfRange { t, lo, hi });
    }
    let t = t.clamp(lo, hi);
    // First index with gt[i].t >= t.
    let i = gt.partition_point(|p| p.t < t);
    if i < gt.len() && gt[i].t == t {
        return Ok(gt[i]);
    }
    if i == 0 {
        return Ok(gt[0]);
    }
    let (a, b) = (&gt[i - 1], &gt[i]);
    let gap = b.t - a.t;
    if gap > max_gap * (1.0 + 1e-9) {
        return Err(DataError::InterpolationGap {
            t,
            gap,
            period: max_gap,
        });
    }
    let u = (t - a.t) / gap;
    Ok(PoseSample {
        t,
        position: a.position + (b.position - a.position) * u,
        orientation: a.orientation.slerp(&b.orientation, u),
    })
}

/// One network input: gravity-aligned samples plus the displacement target
/// expressed in the window-start yaw frame.
#[derive(Clone, Debug)]
pub struct Window {
    /// N×6 row-major samples; each row is [ax, ay, az, wx, wy, wz] after alignment.
    pub x: Vec<f64>,
    /// Rows in `x`.
    pub n: usize,
    /// Ground-truth displacement over [t_start, t_end] in the window frame.
    pub d_gt: Vector3<f64>,
    /// Heading of the alignment frame at window start, radians.
    pub yaw: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl Window {
    /// True when the ground-truth displacement is negligible (platform at rest).
    pub fn is_stationary(&self, threshold_m: f64) -> bool {
        self.d_gt.norm() < threshold_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    fn straight_line_gt(n: usize, dt: f64) -> Vec<PoseSample> {
        (0..n)
            .map(|k| PoseSample {
                t: k as f64 * dt,
                position: Vector3::new(k as f64 * dt * 2.0, 0.0, 0.0),
                orientation: UnitQuaternion::identity(),
            })
            .collect()
    }

    #[test]
    fn interpolation_hits_samples_exactly() {
        let gt = straight_line_gt(11, 0.1);
        let p = interpolate_pose(&gt, 0.5, 0.1).unwrap();
        assert_relative_eq!(p.position.x, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_is_linear_between_samples() {
        let gt = straight_line_gt(11, 0.1);
        let p = interpolate_pose(&gt, 0.55, 0.1).unwrap();
        assert_relative_eq!(p.position.x, 1.1, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_rejects_large_gaps() {
        let mut gt = straight_line_gt(11, 0.1);
        gt.remove(5); // hole at t=0.5, gap becomes 0.2
        let err = interpolate_pose(&gt, 0.45, 0.1).unwrap_err();
        assert!(matches!(err, DataError::InterpolationGap { .. }));
    }

    #[test]
    fn interpolation_rejects_out_of_range() {
        let gt = straight_line_gt(11, 0.1);
        assert!(matches!(
            interpolate_pose(&gt, 1.5, 0.1),
            Err(DataError::OutOfRange { .. })
        ));
    }

    #[test]
    fn jitter_violation_is_detected() {
        let mut seq = Sequence {
            rate: 100.0,
            imu: (0..10)
                .map(|k| ImuSample {
                    t: k as f64 * 0.01,
                    gyro: Vector3::zeros(),
                    accel: Vector3::zeros(),
                })
                .collect(),
            gt: vec![],
            bias_gt: None,
        };
        seq.validate().unwrap();
        seq.imu[5].t += 5e-6;
        assert!(seq.validate().is_err());
    }
}
