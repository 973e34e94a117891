//! Synthetic trajectory generator with analytic ground truth.
//!
//! Motion is a chain of closed-form segments. Every segment starts and ends at
//! rest, and speed ramps follow a smoothstep profile, so position is C¹ (and the
//! body-frame accelerometer signal is free of Dirac spikes at joins). The body
//! carries a yaw-only attitude: motions translate and turn in the plane or bob
//! vertically, the canonical regimes for pedestrian-style inertial data.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, ImuSample, PoseSample, Result, Sequence};
use crate::geometry::{quat_z, rot_z};

const GRAVITY: f64 = 9.81;

/// World-frame gravity vector. A stationary upright accelerometer reads
/// the opposite of this on its z axis: +9.81 m/s².
pub fn gravity_world() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

/// Sensor noise and bias description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Gyro white-noise standard deviation per sample, rad/s.
    pub sigma_g: f64,
    /// Accel white-noise standard deviation per sample, m/s².
    pub sigma_a: f64,
    /// Constant gyro bias, rad/s.
    #[serde(default)]
    pub bg: [f64; 3],
    /// Constant accel bias, m/s².
    #[serde(default)]
    pub ba: [f64; 3],
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            sigma_g: 0.0,
            sigma_a: 0.0,
            bg: [0.0; 3],
            ba: [0.0; 3],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

/// One motion segment. All segments begin and end at zero velocity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSpec {
    /// Hold still for `duration` seconds.
    Stationary { duration: f64 },
    /// Translate along `velocity` with smoothstep ramps at both ends; heading fixed.
    ConstVel { velocity: [f64; 3], duration: f64 },
    /// Oscillate along a body axis: offset (A/2)(1 − cos 2πft). Duration snaps to
    /// a whole number of half-periods so the segment ends at rest.
    Sinusoid {
        axis: Axis,
        amplitude: f64,
        frequency: f64,
        duration: f64,
    },
    /// Drive a circular arc of the given radius at the given speed, heading
    /// tangent to the path. Counter-clockwise unless `clockwise`.
    ArcTurn {
        radius: f64,
        speed: f64,
        duration: f64,
        #[serde(default)]
        clockwise: bool,
    },
}

/// Full description of a synthetic sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Sample rate, Hz. 100 and 200 are supported.
    pub rate: u32,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub segments: Vec<SegmentSpec>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rate != 100 && self.rate != 200 {
            return Err(DataError::InvalidSpec(format!(
                "rate {} Hz not supported (expected 100 or 200)",
                self.rate
            )));
        }
        if self.segments.is_empty() {
            return Err(DataError::InvalidSpec("no segments".into()));
        }
        if !(self.noise.sigma_g >= 0.0 && self.noise.sigma_a >= 0.0) {
            return Err(DataError::InvalidSpec("negative noise sigma".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            let bad = |msg: String| Err(DataError::InvalidSpec(format!("segment {i}: {msg}")));
            match *seg {
                SegmentSpec::Stationary { duration } => {
                    if !(duration > 0.0) {
                        return bad(format!("non-positive duration {duration}"));
                    }
                }
                SegmentSpec::ConstVel { velocity, duration } => {
                    if !(duration > 0.0) {
                        return bad(format!("non-positive duration {duration}"));
                    }
                    if !velocity.iter().all(|v| v.is_finite()) {
                        return bad("non-finite velocity".into());
                    }
                }
                SegmentSpec::Sinusoid {
                    amplitude,
                    frequency,
                    duration,
                    ..
                } => {
                    if !(duration > 0.0) {
                        return bad(format!("non-positive duration {duration}"));
                    }
                    if !(frequency > 0.0) {
                        return bad(format!("non-positive frequency {frequency}"));
                    }
                    if !amplitude.is_finite() {
                        return bad("non-finite amplitude".into());
                    }
                }
                SegmentSpec::ArcTurn {
                    radius,
                    speed,
                    duration,
                    ..
                } => {
                    if !(duration > 0.0) {
                        return bad(format!("non-positive duration {duration}"));
                    }
                    if !(radius > 0.0) {
                        return bad(format!("non-positive radius {radius}"));
                    }
                    if !(speed > 0.0) {
                        return bad(format!("non-positive speed {speed}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Kinematic state at one instant: world position/velocity/acceleration plus
/// heading and heading rate.
#[derive(Clone, Copy, Debug)]
struct Kinematics {
    p: Vector3<f64>,
    v: Vector3<f64>,
    a: Vector3<f64>,
    yaw: f64,
    yaw_rate: f64,
}

/// Smoothstep speed profile over [0, T] with ramp time tau at each end.
/// Returns (s, r, r_dot): integrated profile, profile value in [0,1], derivative.
fn ramp_profile(t: f64, total: f64, tau: f64) -> (f64, f64, f64) {
    debug_assert!(total >= 2.0 * tau);
    let smooth = |u: f64| 3.0 * u * u - 2.0 * u * u * u;
    let smooth_int = |u: f64| u * u * u - 0.5 * u * u * u * u;
    let smooth_dot = |u: f64| 6.0 * u - 6.0 * u * u;
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t < tau {
        let u = t / tau;
        (tau * smooth_int(u), smooth(u), smooth_dot(u) / tau)
    } else if t <= total - tau {
        (tau * 0.5 + (t - tau), 1.0, 0.0)
    } else if t < total {
        let u = (t - (total - tau)) / tau;
        (
            (total - tau) - 0.5 * tau + tau * (u - smooth_int(u)),
            1.0 - smooth(u),
            -smooth_dot(u) / tau,
        )
    } else {
        (total - tau, 0.0, 0.0)
    }
}

fn ramp_time(total: f64) -> f64 {
    (0.25 * total).min(0.5)
}

/// A segment with its entry pose baked in, evaluable at any local time.
struct PlacedSegment {
    spec: SegmentSpec,
    duration: f64,
    p0: Vector3<f64>,
    yaw0: f64,
}

impl PlacedSegment {
    fn place(spec: &SegmentSpec, p0: Vector3<f64>, yaw0: f64) -> Self {
        let (spec, duration) = match *spec {
            SegmentSpec::Sinusoid {
                axis,
                amplitude,
                frequency,
                duration,
            } => {
                // Snap to a whole number of half-periods so velocity is zero at the end.
                let half = 0.5 / frequency;
                let n = (duration / half).round().max(1.0);
                let snapped = n * half;
                (
                    SegmentSpec::Sinusoid {
                        axis,
                        amplitude,
                        frequency,
                        duration: snapped,
                    },
                    snapped,
                )
            }
            ref other => (
                other.clone(),
                match *other {
                    SegmentSpec::Stationary { duration }
                    | SegmentSpec::ConstVel { duration, .. }
                    | SegmentSpec::ArcTurn { duration, .. } => duration,
                    SegmentSpec::Sinusoid { .. } => unreachable!(),
                },
            ),
        };
        Self {
            spec,
            duration,
            p0,
            yaw0,
        }
    }

    fn eval(&self, tau: f64) -> Kinematics {
        let rest = Kinematics {
            p: self.p0,
            v: Vector3::zeros(),
            a: Vector3::zeros(),
            yaw: self.yaw0,
            yaw_rate: 0.0,
        };
        match self.spec {
            SegmentSpec::Stationary { .. } => rest,
            SegmentSpec::ConstVel { velocity, .. } => {
                let vel = Vector3::from(velocity);
                let (s, r, r_dot) = ramp_profile(tau, self.duration, ramp_time(self.duration));
                Kinematics {
                    p: self.p0 + vel * s,
                    v: vel * r,
                    a: vel * r_dot,
                    ..rest
                }
            }
            SegmentSpec::Sinusoid {
                axis,
                amplitude,
                frequency,
                ..
            } => {
                let dir = rot_z(self.yaw0) * axis.unit();
                let w = 2.0 * std::f64::consts::PI * frequency;
                let half_a = 0.5 * amplitude;
                Kinematics {
                    p: self.p0 + dir * (half_a * (1.0 - (w * tau).cos())),
                    v: dir * (half_a * w * (w * tau).sin()),
                    a: dir * (half_a * w * w * (w * tau).cos()),
                    ..rest
                }
            }
            SegmentSpec::ArcTurn {
                radius,
                speed,
                clockwise,
                ..
            } => {
                let dir = if clockwise { -1.0 } else { 1.0 };
                let (s, r, r_dot) = ramp_profile(tau, self.duration, ramp_time(self.duration));
                let (arc, sdot, sddot) = (speed * s, speed * r, speed * r_dot);
                let psi = self.yaw0 + dir * arc / radius;
                let (sin_p, cos_p) = psi.sin_cos();
                let (sin_0, cos_0) = self.yaw0.sin_cos();
                let center = self.p0 + dir * radius * Vector3::new(-sin_0, cos_0, 0.0);
                Kinematics {
                    p: center + dir * radius * Vector3::new(sin_p, -cos_p, 0.0),
                    v: sdot * Vector3::new(cos_p, sin_p, 0.0),
                    a: sddot * Vector3::new(cos_p, sin_p, 0.0)
                        + dir * (sdot * sdot / radius) * Vector3::new(-sin_p, cos_p, 0.0),
                    yaw: psi,
                    yaw_rate: dir * sdot / radius,
                }
            }
        }
    }

    /// Pose at the end of the segment (velocity is zero there by construction).
    fn exit(&self) -> (Vector3<f64>, f64) {
        let k = self.eval(self.duration);
        debug_assert!(
            k.v.norm() < 1e-12,
            "segment must come to rest at its end, got velocity {:?}",
            k.v
        );
        (k.p, k.yaw)
    }
}

/// Generate a [`Sequence`] from a [`SynthSpec`]. Deterministic for a given seed.
pub fn synth_generate(spec: &SynthSpec) -> Result<Sequence> {
    spec.validate()?;
    let mut placed = Vec::with_capacity(spec.segments.len());
    let mut boundaries = vec![0.0f64];
    let (mut p, mut yaw) = (Vector3::zeros(), 0.0);
    for seg in &spec.segments {
        let pl = PlacedSegment::place(seg, p, yaw);
        let (pe, ye) = pl.exit();
        boundaries.push(boundaries.last().unwrap() + pl.duration);
        placed.push(pl);
        p = pe;
        yaw = ye;
    }
    let total = *boundaries.last().unwrap();
    let dt = 1.0 / spec.rate as f64;
    let n_samples = (total / dt).floor() as usize + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let mut draw3 = |sigma: f64| -> Vector3<f64> {
        let v = Vector3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        );
        sigma * v
    };

    let bg = Vector3::from(spec.noise.bg);
    let ba = Vector3::from(spec.noise.ba);
    let g = gravity_world();
    let mut imu = Vec::with_capacity(n_samples);
    let mut gt = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t = k as f64 * dt;
        // Segment owning t: last boundary not exceeding it.
        let idx = boundaries.partition_point(|&b| b <= t).min(placed.len()) - 1;
        let kin = placed[idx].eval(t - boundaries[idx]);
        let r = rot_z(kin.yaw);
        let accel_body = r.inverse() * (kin.a - g);
        // Yaw-only attitude: world angular velocity (0,0,yaw_rate) is unchanged
        // by the rotation into the body frame.
        let gyro_body = Vector3::new(0.0, 0.0, kin.yaw_rate);
        imu.push(ImuSample {
            t,
            gyro: gyro_body + bg + draw3(spec.noise.sigma_g),
            accel: accel_body + ba + draw3(spec.noise.sigma_a),
        });
        gt.push(PoseSample {
            t,
            position: kin.p,
            orientation: quat_z(kin.yaw),
        });
    }
    let seq = Sequence {
        rate: spec.rate as f64,
        imu,
        gt,
        bias_gt: Some((bg, ba)),
    };
    seq.validate()?;
    Ok(seq)
}
