//! Trajectory comparison: alignment, ATE/RMSE, and run artifacts.
//!
//! The entry point is [`evaluate`]: it resamples the estimate onto the
//! ground-truth timestamps, removes the free degrees of freedom an inertial
//! pipeline cannot observe (initial position and heading), and reduces the
//! per-timestamp position errors to a single RMS number. [`emit_outputs`]
//! writes the report as JSON next to per-trajectory CSVs and a top-down SVG
//! overlay so a run can be inspected without extra tooling.
//!
//! One definition, two names: `ate_m` and `rmse_m` in [`MetricReport`] are both
//! the RMS of per-timestamp 3D position error after first-pose alignment.
//! Publishing both avoids ambiguity when comparing against tools that call the
//! same quantity by either name; they are equal by construction here.

mod emit;

use std::path::PathBuf;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{interpolate_pose, DataError, PoseSample};
use crate::geometry::{quat_z, yaw_of};

pub use emit::emit_outputs;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation: {0}")]
    Invalid(String),

    #[error(
        "no overlapping timestamps: estimate spans [{est_lo:.3}, {est_hi:.3}] s, \
         ground truth [{gt_lo:.3}, {gt_hi:.3}] s"
    )]
    NoOverlap {
        est_lo: f64,
        est_hi: f64,
        gt_lo: f64,
        gt_hi: f64,
    },

    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },

    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// A pose sequence with strictly increasing, finite timestamps.
///
/// The constructor is the only way in, so every function below can assume the
/// ordering invariant instead of re-checking it.
#[derive(Clone, Debug)]
pub struct Trajectory {
    samples: Vec<PoseSample>,
}

impl Trajectory {
    pub fn new(samples: Vec<PoseSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(EvalError::Invalid("trajectory is empty".into()));
        }
        for p in &samples {
            if !p.t.is_finite() || !p.position.iter().all(|v| v.is_finite()) {
                return Err(EvalError::Invalid(format!(
                    "non-finite pose at t={}: position {:?}",
                    p.t, p.position
                )));
            }
        }
        for w in samples.windows(2) {
            if w[1].t <= w[0].t {
                return Err(EvalError::Invalid(format!(
                    "timestamps must be strictly increasing, got {} then {}",
                    w[0].t, w[1].t
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    /// Time covered, last timestamp minus first.
    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }
}

impl std::ops::Deref for Trajectory {
    type Target = [PoseSample];

    fn deref(&self) -> &[PoseSample] {
        &self.samples
    }
}

/// How to remove the unobservable degrees of freedom before computing errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Alignment {
    /// Match the first pose: translation plus heading. Roll and pitch are left
    /// alone because gravity makes them observable, so errors there are real.
    /// This is the default and what `ate_m`/`rmse_m` are defined against.
    #[default]
    FirstPose,
    /// Least-squares rigid fit (full 3D rotation + translation) over all
    /// positions. Optional because it can absorb attitude drift that
    /// first-pose alignment would correctly expose.
    Umeyama,
}

/// Scalar summary of a run, serialized as the `metrics.json` artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    /// RMS 3D position error in meters after alignment.
    pub ate_m: f64,
    /// Same quantity as `ate_m`; see the module docs for why both are kept.
    pub rmse_m: f64,
    /// Time span of the compared poses in seconds.
    pub duration_s: f64,
    /// Number of timestamp pairs that entered the error sum.
    pub n: usize,
    /// Hash of the configuration that produced the run, for provenance.
    pub config_hash: String,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ate_m", self.ate_m),
            ("rmse_m", self.rmse_m),
            ("duration_s", self.duration_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(EvalError::Invalid(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Everything [`evaluate`] produces: the report plus the trajectories the
/// numbers were computed from, ready for [`emit_outputs`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricReport,
    /// Estimate resampled onto ground-truth timestamps and aligned.
    pub estimate: Trajectory,
    /// Ground-truth subset at the same timestamps.
    pub ground_truth: Trajectory,
}

/// SHA-256 of raw bytes as lowercase hex, used to tie a report to its config.
pub fn config_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Resample `est` at the ground-truth timestamps that fall inside its span.
///
/// Positions are interpolated linearly and orientations slerped. Returns the
/// resampled estimate and the matching ground-truth subset, equal length by
/// construction. Timestamps outside the overlap are dropped; if nothing
/// overlaps at all, that is an error rather than an empty result.
pub fn associate(est: &Trajectory, gt: &Trajectory) -> Result<(Trajectory, Trajectory)> {
    let (lo, hi) = (est[0].t, est[est.len() - 1].t);
    let mut est_at = Vec::new();
    let mut gt_at = Vec::new();
    for g in gt.samples() {
        if g.t < lo || g.t > hi {
            continue;
        }
        // The gap limit guards data ingestion; resampling a trajectory we
        // already accepted should not re-police its spacing.
        est_at.push(interpolate_pose(est.samples(), g.t, f64::INFINITY)?);
        gt_at.push(*g);
    }
    if est_at.is_empty() {
        return Err(EvalError::NoOverlap {
            est_lo: lo,
            est_hi: hi,
            gt_lo: gt[0].t,
            gt_hi: gt[gt.len() - 1].t,
        });
    }
    Ok((Trajectory { samples: est_at }, Trajectory { samples: gt_at }))
}

/// Rigidly move `est` so its first pose matches `gt`'s first pose in position
/// and heading. Roll and pitch are untouched: the whole trajectory is rotated
/// about the world z axis and translated, nothing else.
///
/// Applying the function twice gives the same result as applying it once,
/// since after the first pass the first-pose mismatch is zero.
pub fn align_first_pose(est: &Trajectory, gt: &Trajectory) -> Trajectory {
    let e0 = est[0];
    let g0 = gt[0];
    let dyaw = yaw_of(&g0.orientation.to_rotation_matrix())
        - yaw_of(&e0.orientation.to_rotation_matrix());
    let spin = quat_z(dyaw);
    let rot = spin.to_rotation_matrix();
    let samples = est
        .iter()
        .map(|p| PoseSample {
            t: p.t,
            position: g0.position + rot * (p.position - e0.position),
            orientation: spin * p.orientation,
        })
        .collect();
    Trajectory { samples }
}

/// Least-squares rigid alignment of `est` onto `gt` over all positions
/// (rotation constrained to det +1, no scale). Orientations are rotated by
/// the same fit. Errors if the lengths differ.
pub fn align_umeyama(est: &Trajectory, gt: &Trajectory) -> Result<Trajectory> {
    if est.len() != gt.len() {
        return Err(EvalError::Invalid(format!(
            "rigid fit needs paired poses, got {} vs {}",
            est.len(),
            gt.len()
        )));
    }
    let n = est.len() as f64;
    let mean_e = est.iter().map(|p| p.position).sum::<nalgebra::Vector3<f64>>() / n;
    let mean_g = gt.iter().map(|p| p.position).sum::<nalgebra::Vector3<f64>>() / n;
    let mut cross = Matrix3::zeros();
    for (e, g) in est.iter().zip(gt.iter()) {
        cross += (g.position - mean_g) * (e.position - mean_e).transpose();
    }
    cross /= n;
    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * v_t;
    let t = mean_g - r * mean_e;
    // SVD output is orthonormal only up to roundoff; normalize through a
    // quaternion before composing with pose orientations.
    let spin = UnitQuaternion::new_normalize(
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)).into_inner(),
    );
    let samples = est
        .iter()
        .map(|p| PoseSample {
            t: p.t,
            position: r * p.position + t,
            orientation: spin * p.orientation,
        })
        .collect();
    Ok(Trajectory { samples })
}

/// RMS of per-timestamp 3D position errors between two time-synchronized
/// trajectories. No alignment happens here; callers choose one first (or
/// deliberately skip it). Always nonnegative.
pub fn ate(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(EvalError::Invalid(format!(
            "length mismatch after interpolation: estimate has {} poses, ground truth {}",
            est.len(),
            gt.len()
        )));
    }
    for (e, g) in est.iter().zip(gt.iter()) {
        if (e.t - g.t).abs() > 1e-9 {
            return Err(EvalError::Invalid(format!(
                "timestamps diverge: estimate at {} vs ground truth at {}",
                e.t, g.t
            )));
        }
    }
    let sum_sq: f64 = est
        .iter()
        .zip(gt.iter())
        .map(|(e, g)| (e.position - g.position).norm_squared())
        .sum();
    Ok((sum_sq / est.len() as f64).sqrt())
}

/// Alias for [`ate`]: with the definitions used here the two metrics coincide
/// (RMS position error over the same aligned, synchronized pairs).
pub fn rmse(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    ate(est, gt)
}

/// Full comparison pipeline: associate, align, reduce to a [`MetricReport`].
pub fn evaluate(
    est: &Trajectory,
    gt: &Trajectory,
    alignment: Alignment,
    config_hash: &str,
) -> Result<Evaluation> {
    let (est_resampled, gt_subset) = associate(est, gt)?;
    let aligned = match alignment {
        Alignment::FirstPose => align_first_pose(&est_resampled, &gt_subset),
        Alignment::Umeyama => align_umeyama(&est_resampled, &gt_subset)?,
    };
    let rms = ate(&aligned, &gt_subset)?;
    let report = MetricReport {
        ate_m: rms,
        rmse_m: rms,
        duration_s: gt_subset.duration(),
        n: gt_subset.len(),
        config_hash: config_hash.to_string(),
    };
    report.validate()?;
    Ok(Evaluation {
        report,
        estimate: aligned,
        ground_truth: gt_subset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose(t: f64, p: [f64; 3], yaw: f64) -> PoseSample {
        PoseSample {
            t,
            position: Vector3::new(p[0], p[1], p[2]),
            orientation: quat_z(yaw),
        }
    }

    /// A wiggly but deterministic planar path with varying heading.
    fn curvy(n: usize, dt: f64) -> Trajectory {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                pose(
                    t,
                    [t.sin() + 0.3 * t, 0.5 * (0.7 * t).cos(), 0.1 * (0.3 * t).sin()],
                    0.2 * t,
                )
            })
            .collect();
        Trajectory::new(samples).unwrap()
    }

    /// Apply one rigid yaw + translation to every pose.
    fn transformed(traj: &Trajectory, yaw: f64, offset: Vector3<f64>) -> Trajectory {
        let spin = quat_z(yaw);
        let rot = spin.to_rotation_matrix();
        let samples = traj
            .iter()
            .map(|p| PoseSample {
                t: p.t,
                position: rot * p.position + offset,
                orientation: spin * p.orientation,
            })
            .collect();
        Trajectory::new(samples).unwrap()
    }

    #[test]
    fn rejects_empty_unordered_or_nonfinite_input() {
        assert!(matches!(
            Trajectory::new(vec![]),
            Err(EvalError::Invalid(_))
        ));
        let dup = vec![pose(0.0, [0.0; 3], 0.0), pose(0.0, [1.0; 3], 0.0)];
        assert!(Trajectory::new(dup).is_err());
        let back = vec![pose(1.0, [0.0; 3], 0.0), pose(0.5, [1.0; 3], 0.0)];
        assert!(Trajectory::new(back).is_err());
        let nan = vec![pose(f64::NAN, [0.0; 3], 0.0)];
        assert!(Trajectory::new(nan).is_err());
        let bad_pos = vec![pose(0.0, [f64::INFINITY, 0.0, 0.0], 0.0)];
        assert!(Trajectory::new(bad_pos).is_err());
        assert!(Trajectory::new(vec![pose(0.0, [0.0; 3], 0.0)]).is_ok());
    }

    #[test]
    fn identical_trajectories_score_exactly_zero() {
        let gt = curvy(200, 0.05);
        assert_eq!(ate(&gt, &gt).unwrap(), 0.0);
        let aligned = align_first_pose(&gt, &gt);
        for (a, g) in aligned.iter().zip(gt.iter()) {
            assert_relative_eq!(a.position, g.position, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_offset_is_absorbed_by_first_pose_alignment() {
        let gt = curvy(150, 0.1);
        let est = transformed(&gt, 0.0, Vector3::new(1.0, 2.0, 0.0));
        let aligned = align_first_pose(&est, &gt);
        assert!(ate(&aligned, &gt).unwrap() < 1e-12);
    }

    #[test]
    fn pure_yaw_offset_is_absorbed_by_first_pose_alignment() {
        let gt = curvy(150, 0.1);
        let est = transformed(&gt, 45f64.to_radians(), Vector3::new(-3.0, 0.7, 0.0));
        let aligned = align_first_pose(&est, &gt);
        assert!(ate(&aligned, &gt).unwrap() < 1e-9);
        // Attitudes come back too, not just positions.
        for (a, g) in aligned.iter().zip(gt.iter()) {
            assert!(a.orientation.angle_to(&g.orientation) < 1e-9);
        }
    }

    #[test]
    fn first_pose_alignment_is_idempotent() {
        let gt = curvy(100, 0.1);
        let est = transformed(&gt, 1.1, Vector3::new(4.0, -2.0, 0.5));
        let once = align_first_pose(&est, &gt);
        let twice = align_first_pose(&once, &gt);
        for (a, b) in once.iter().zip(twice.iter()) {
            assert_relative_eq!(a.position, b.position, epsilon = 1e-12);
        }
    }

    #[test]
    fn first_pose_alignment_leaves_roll_and_pitch_alone() {
        // Give the estimate a tilted attitude; alignment may spin it about
        // world z but the body z axis must keep its tilt angle from vertical.
        let tilt = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.3);
        let samples: Vec<PoseSample> = (0..50)
            .map(|i| PoseSample {
                t: i as f64 * 0.1,
                position: Vector3::new(i as f64 * 0.1, 0.0, 0.0),
                orientation: quat_z(0.4) * tilt,
            })
            .collect();
        let est = Trajectory::new(samples).unwrap();
        let gt = curvy(50, 0.1);
        let aligned = align_first_pose(&est, &gt);
        for (a, e) in aligned.iter().zip(est.iter()) {
            let before = (e.orientation * Vector3::z()).z;
            let after = (a.orientation * Vector3::z()).z;
            assert_relative_eq!(before, after, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_error_is_its_own_rms() {
        let gt = curvy(123, 0.1);
        let dir = Vector3::new(0.6, 0.8, 0.0);
        let samples = gt
            .iter()
            .map(|p| PoseSample {
                position: p.position + dir,
                ..*p
            })
            .collect();
        let est = Trajectory::new(samples).unwrap();
        assert_relative_eq!(ate(&est, &gt).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ramp_error_matches_the_continuous_limit() {
        let n = 20_001usize;
        let gt = Trajectory::new(
            (0..n)
                .map(|i| pose(i as f64, [0.0; 3], 0.0))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let samples = gt
            .iter()
            .enumerate()
            .map(|(i, p)| PoseSample {
                position: p.position
                    + Vector3::new(2.0 * i as f64 / (n - 1) as f64, 0.0, 0.0),
                ..*p
            })
            .collect();
        let est = Trajectory::new(samples).unwrap();
        let got = ate(&est, &gt).unwrap();
        // Exact discrete value: mean of (2i/(n-1))^2 = 2(2n-1)/(3(n-1)).
        let exact = (2.0 * (2.0 * n as f64 - 1.0) / (3.0 * (n as f64 - 1.0))).sqrt();
        assert_relative_eq!(got, exact, epsilon = 1e-12);
        // And for fine sampling it approaches 2/sqrt(3).
        assert_relative_eq!(got, 2.0 / 3f64.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn ate_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let base = curvy(40, 0.1);
            let jitter: Vec<PoseSample> = base
                .iter()
                .map(|p| PoseSample {
                    position: p.position
                        + Vector3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        ),
                    ..*p
                })
                .collect();
            let other = Trajectory::new(jitter).unwrap();
            assert_eq!(ate(&base, &other).unwrap(), ate(&other, &base).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Moving both trajectories by the same yaw + translation changes
        /// nothing: distances between paired points are preserved.
        #[test]
        fn ate_is_invariant_to_a_common_rigid_motion(
            yaw in -3.0f64..3.0,
            dx in -10.0f64..10.0,
            dy in -10.0f64..10.0,
            dz in -5.0f64..5.0,
        ) {
            let gt = curvy(60, 0.1);
            let est = transformed(&gt, 0.3, Vector3::new(0.4, -0.2, 0.1));
            let offset = Vector3::new(dx, dy, dz);
            let before = ate(&est, &gt).unwrap();
            let after = ate(
                &transformed(&est, yaw, offset),
                &transformed(&gt, yaw, offset),
            )
            .unwrap();
            prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
        }
    }

    #[test]
    fn umeyama_recovers_a_full_rigid_transform() {
        // Helix: non-planar so the 3D rotation is fully determined.
        let samples: Vec<PoseSample> = (0..120)
            .map(|i| {
                let t = i as f64 * 0.1;
                pose(t, [t.cos(), t.sin(), 0.2 * t], 0.1 * t)
            })
            .collect();
        let gt = Trajectory::new(samples).unwrap();
        let spin = UnitQuaternion::from_euler_angles(0.2, -0.3, 1.2);
        let rot = spin.to_rotation_matrix();
        let offset = Vector3::new(5.0, -1.0, 2.0);
        let est = Trajectory::new(
            gt.iter()
                .map(|p| PoseSample {
                    t: p.t,
                    position: rot * p.position + offset,
                    orientation: spin * p.orientation,
                })
                .collect(),
        )
        .unwrap();

        // First-pose alignment cannot undo roll/pitch, so error remains...
        let partial = align_first_pose(&est, &gt);
        assert!(ate(&partial, &gt).unwrap() > 1e-3);
        // ...while the rigid fit recovers the exact transform.
        let fitted = align_umeyama(&est, &gt).unwrap();
        assert!(ate(&fitted, &gt).unwrap() < 1e-9);
        for (f, g) in fitted.iter().zip(gt.iter()) {
            assert!(f.orientation.angle_to(&g.orientation) < 1e-9);
        }

        let short = Trajectory::new(vec![pose(0.0, [0.0; 3], 0.0)]).unwrap();
        assert!(align_umeyama(&short, &gt).is_err());
    }

    #[test]
    fn resampling_matches_hand_interpolation() {
        let est = Trajectory::new(vec![
            pose(0.0, [0.0, 0.0, 0.0], 0.0),
            pose(1.0, [1.0, 0.0, 0.0], 0.0),
            pose(2.0, [3.0, 0.0, 0.0], 0.0),
        ])
        .unwrap();
        let gt = Trajectory::new(vec![
            pose(-1.0, [0.0; 3], 0.0),
            pose(0.5, [0.0; 3], 0.0),
            pose(1.5, [0.0; 3], 0.0),
            pose(5.0, [0.0; 3], 0.0),
        ])
        .unwrap();
        let (est_r, gt_r) = associate(&est, &gt).unwrap();
        // Out-of-span gt timestamps (-1 and 5) are dropped.
        assert_eq!(est_r.len(), 2);
        assert_eq!(gt_r.len(), 2);
        assert_eq!(gt_r[0].t, 0.5);
        assert_relative_eq!(est_r[0].position.x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(est_r[1].position.x, 2.0, epsilon = 1e-12);

        let far = Trajectory::new(vec![pose(10.0, [0.0; 3], 0.0), pose(11.0, [0.0; 3], 0.0)])
            .unwrap();
        assert!(matches!(
            associate(&est, &far),
            Err(EvalError::NoOverlap { .. })
        ));
    }

    #[test]
    fn ate_rejects_mismatched_inputs() {
        let a = curvy(10, 0.1);
        let b = curvy(11, 0.1);
        assert!(matches!(ate(&a, &b), Err(EvalError::Invalid(_))));
        let shifted = Trajectory::new(
            a.iter()
                .map(|p| PoseSample { t: p.t + 0.01, ..*p })
                .collect(),
        )
        .unwrap();
        assert!(matches!(ate(&a, &shifted), Err(EvalError::Invalid(_))));
    }

    #[test]
    fn report_schema_is_exactly_the_documented_fields() {
        let report = MetricReport {
            ate_m: 0.25,
            rmse_m: 0.25,
            duration_s: 60.0,
            n: 120,
            config_hash: "abc".into(),
        };
        report.validate().unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(
            json,
            r#"{"ate_m":0.25,"rmse_m":0.25,"duration_s":60.0,"n":120,"config_hash":"abc"}"#
        );
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        // Unknown fields are rejected, so stale readers fail loudly.
        let extra = r#"{"ate_m":0.1,"rmse_m":0.1,"duration_s":1.0,"n":2,"config_hash":"x","foo":1}"#;
        assert!(serde_json::from_str::<MetricReport>(extra).is_err());

        let bad = MetricReport {
            ate_m: -0.1,
            ..report
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn evaluate_composes_the_pipeline() {
        let gt = curvy(80, 0.25);
        let est = transformed(&gt, 0.7, Vector3::new(2.0, -1.0, 0.0));
        let eval = evaluate(&est, &gt, Alignment::FirstPose, "deadbeef").unwrap();
        assert_eq!(eval.report.n, 80);
        assert_eq!(eval.report.ate_m, eval.report.rmse_m);
        assert!(eval.report.ate_m < 1e-9);
        assert_relative_eq!(eval.report.duration_s, 79.0 * 0.25, epsilon = 1e-12);
        assert_eq!(eval.report.config_hash, "deadbeef");
        assert_eq!(eval.estimate.len(), eval.ground_truth.len());
    }

    #[test]
    fn config_hash_matches_a_known_digest() {
        assert_eq!(
            config_hash(b"hello"),
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        assert_eq!(config_hash(b"").len(), 64);
    }
}
