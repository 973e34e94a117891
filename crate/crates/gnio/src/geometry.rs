//! Rotation helpers shared by windowing, filtering and evaluation.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

/// Heading angle of a rotation: the yaw of the body x-axis projected into the
/// world horizontal plane.
pub fn yaw_of(r: &Rotation3<f64>) -> f64 {
    r[(1, 0)].atan2(r[(0, 0)])
}

/// Heading-only part of a rotation, as a rotation about world z.
///
/// Returns the yaw rotation and a degeneracy flag: when the body x-axis is
/// within ~1e-6 of vertical (pitch near ±90°) the heading is ill-defined, the
/// flag is set and the yaw is taken as 0.
pub fn yaw_rotation(r: &Rotation3<f64>) -> (Rotation3<f64>, bool) {
    let horizontal = r[(1, 0)].hypot(r[(0, 0)]);
    if horizontal < 1e-6 {
        return (Rotation3::identity(), true);
    }
    (Rotation3::from_axis_angle(&Vector3::z_axis(), yaw_of(r)), false)
}

/// Skew-symmetric cross-product matrix: skew(v) * w == v × w.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation about world z by `yaw` radians.
pub fn rot_z(yaw: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
}

/// Quaternion for a pure-yaw attitude.
pub fn quat_z(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
}

/// Max absolute deviation of RᵀR from the identity; zero for a perfect rotation.
pub fn orthonormality_defect(r: &Rotation3<f64>) -> f64 {
    let d = r.matrix().transpose() * r.matrix() - Matrix3::identity();
    d.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}
