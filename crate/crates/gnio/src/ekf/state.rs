//! Error-state filter core: propagation, cloning, marginalization, update.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::{EkfError, InitCov, NoiseParams, Result};
use crate::data::gravity_world;
use crate::geometry::{skew, yaw_rotation};

pub(crate) const THETA: usize = 0;
pub(crate) const VEL: usize = 3;
pub(crate) const POS: usize = 6;
pub(crate) const BG: usize = 9;
pub(crate) const BA: usize = 12;
/// Error dimensions of the live navigation state: [δθ, δv, δp, δb_g, δb_a].
pub const NAV_DIM: usize = 15;
/// Error dimensions contributed by each clone: [δθᵢ, δpᵢ].
pub const CLONE_DIM: usize = 6;

/// The nominal navigation state carried alongside the error covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    /// Position in the world frame, m.
    pub p: Vector3<f64>,
    /// Velocity in the world frame, m/s.
    pub v: Vector3<f64>,
    /// Body-to-world rotation.
    pub r: Rotation3<f64>,
    /// Gyro bias, rad/s.
    pub bg: Vector3<f64>,
    /// Accel bias, m/s².
    pub ba: Vector3<f64>,
    /// Time of validity, s.
    pub t: f64,
}

/// A cloned past pose kept so relative-displacement measurements can refer
/// back to it. Its error stays correlated with the live state through the
/// augmented covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloneState {
    pub p: Vector3<f64>,
    pub r: Rotation3<f64>,
    pub t: f64,
    /// IMU sample index at which the clone was made.
    pub sample_idx: usize,
}

/// Outcome of one displacement update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateReport {
    /// False when the innovation covariance was too ill-conditioned and the
    /// measurement was discarded without touching the state.
    pub accepted: bool,
    /// Measured minus predicted displacement, in the clone's yaw frame.
    pub innovation: Vector3<f64>,
    /// Condition number of the innovation covariance.
    pub condition: f64,
}

/// Error-state Kalman filter with stochastic cloning.
///
/// The error state is [δθ(3), δv(3), δp(3), δb_g(3), δb_a(3)] followed by
/// [δθᵢ(3), δpᵢ(3)] per clone, oldest clone first. The rotation error is
/// left-multiplicative in the world frame: R_true = Exp(δθ)·R.
#[derive(Clone, Debug)]
pub struct Ekf {
    pub state: NavState,
    /// Error covariance, symmetric, (15 + 6·clones)².
    pub cov: DMatrix<f64>,
    /// Cloned poses, oldest first.
    pub clones: Vec<CloneState>,
    pub noise: NoiseParams,
    /// Ring capacity; cloning beyond it marginalizes the oldest clone first.
    pub clone_capacity: usize,
    /// World gravity used in propagation, m/s².
    pub gravity: Vector3<f64>,
}

fn renormalize(r: &Rotation3<f64>) -> Rotation3<f64> {
    // from_rotation_matrix trusts its input, so an explicit quaternion
    // normalization is what actually scrubs accumulated roundoff.
    UnitQuaternion::new_normalize(UnitQuaternion::from_rotation_matrix(r).into_inner())
        .to_rotation_matrix()
}

fn exp_so3(v: &Vector3<f64>) -> Rotation3<f64> {
    UnitQuaternion::from_scaled_axis(*v).to_rotation_matrix()
}

impl Ekf {
    pub fn new(state: NavState, init: &InitCov, noise: NoiseParams, clone_capacity: usize) -> Self {
        let mut cov = DMatrix::zeros(NAV_DIM, NAV_DIM);
        for i in 0..3 {
            cov[(THETA + i, THETA + i)] = init.theta;
            cov[(VEL + i, VEL + i)] = init.v;
            cov[(POS + i, POS + i)] = init.p;
            cov[(BG + i, BG + i)] = init.bg;
            cov[(BA + i, BA + i)] = init.ba;
        }
        Self {
            state,
            cov,
            clones: Vec::new(),
            noise,
            clone_capacity: clone_capacity.max(1),
            gravity: gravity_world(),
        }
    }

    /// Current error-state dimension.
    pub fn dim(&self) -> usize {
        NAV_DIM + CLONE_DIM * self.clones.len()
    }

    /// Strapdown propagation over one IMU interval.
    ///
    /// The nominal state integrates R ← R·Exp(ω̂ dt) with the acceleration
    /// rotated at the interval midpoint (R·Exp(ω̂ dt/2)), which keeps the
    /// integrator second-order accurate. The covariance uses the first-order
    /// error transition
    ///   δθ ← δθ − R dt·δb_g,  δv ← δv − skew(R â) dt·δθ − R dt·δb_a,
    ///   δp ← δp + dt·δv,
    /// with process noise density²·dt on the diagonal. Clone blocks keep their
    /// values; only their cross-covariance with the live state rotates.
    pub fn propagate(&mut self, gyro: &Vector3<f64>, accel: &Vector3<f64>, dt: f64) -> Result<()> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(EkfError::InvalidDt(dt));
        }
        let w = gyro - self.state.bg;
        let a = accel - self.state.ba;
        let r = self.state.r;

        // Covariance first, linearized at the pre-step state.
        let mut f = DMatrix::<f64>::identity(NAV_DIM, NAV_DIM);
        f.view_mut((THETA, BG), (3, 3)).copy_from(&(r.matrix() * -dt));
        f.view_mut((VEL, THETA), (3, 3))
            .copy_from(&(skew(&(r * a)) * -dt));
        f.view_mut((VEL, BA), (3, 3)).copy_from(&(r.matrix() * -dt));
        f.view_mut((POS, VEL), (3, 3))
            .copy_from(&(Matrix3::identity() * dt));

        let d = self.dim();
        let p11 = self.cov.view((0, 0), (NAV_DIM, NAV_DIM)).clone_owned();
        let mut p11 = &f * p11 * f.transpose();
        for i in 0..3 {
            p11[(THETA + i, THETA + i)] += self.noise.sigma_g.powi(2) * dt;
            p11[(VEL + i, VEL + i)] += self.noise.sigma_a.powi(2) * dt;
            p11[(BG + i, BG + i)] += self.noise.sigma_bg.powi(2) * dt;
            p11[(BA + i, BA + i)] += self.noise.sigma_ba.powi(2) * dt;
        }
        self.cov.view_mut((0, 0), (NAV_DIM, NAV_DIM)).copy_from(&p11);
        if d > NAV_DIM {
            let p1c = self
                .cov
                .view((0, NAV_DIM), (NAV_DIM, d - NAV_DIM))
                .clone_owned();
            let p1c = &f * p1c;
            self.cov
                .view_mut((0, NAV_DIM), (NAV_DIM, d - NAV_DIM))
                .copy_from(&p1c);
            self.cov
                .view_mut((NAV_DIM, 0), (d - NAV_DIM, NAV_DIM))
                .copy_from(&p1c.transpose());
        }
        self.symmetrize();

        // Nominal state.
        let acc_w = r * exp_so3(&(w * (0.5 * dt))) * a + self.gravity;
        self.state.p += self.state.v * dt + acc_w * (0.5 * dt * dt);
        self.state.v += acc_w * dt;
        self.state.r = renormalize(&(r * exp_so3(&(w * dt))));
        self.state.t += dt;
        Ok(())
    }

    /// Clone the current pose, duplicating its covariance rows and columns so
    /// the clone starts perfectly correlated with the live state. A full ring
    /// marginalizes its oldest clone first.
    pub fn clone_now(&mut self, sample_idx: usize) {
        if self.clones.len() >= self.clone_capacity {
            self.marginalize(0).expect("ring is nonempty");
        }
        let d = self.dim();
        let sel = [THETA, THETA + 1, THETA + 2, POS, POS + 1, POS + 2];
        let mut cov = DMatrix::zeros(d + CLONE_DIM, d + CLONE_DIM);
        cov.view_mut((0, 0), (d, d)).copy_from(&self.cov);
        for (k, &s) in sel.iter().enumerate() {
            for j in 0..d {
                cov[(d + k, j)] = self.cov[(s, j)];
                cov[(j, d + k)] = self.cov[(j, s)];
            }
            for (l, &s2) in sel.iter().enumerate() {
                cov[(d + k, d + l)] = self.cov[(s, s2)];
            }
        }
        self.cov = cov;
        self.clones.push(CloneState {
            p: self.state.p,
            r: self.state.r,
            t: self.state.t,
            sample_idx,
        });
    }

    /// Drop clone `idx`, removing its rows and columns from the covariance.
    pub fn marginalize(&mut self, idx: usize) -> Result<()> {
        if idx >= self.clones.len() {
            return Err(EkfError::BadCloneIndex {
                idx,
                count: self.clones.len(),
            });
        }
        let d = self.dim();
        let base = NAV_DIM + idx * CLONE_DIM;
        let keep: Vec<usize> = (0..d)
            .filter(|&i| i < base || i >= base + CLONE_DIM)
            .collect();
        let mut cov = DMatrix::zeros(d - CLONE_DIM, d - CLONE_DIM);
        for (i, &oi) in keep.iter().enumerate() {
            for (j, &oj) in keep.iter().enumerate() {
                cov[(i, j)] = self.cov[(oi, oj)];
            }
        }
        self.cov = cov;
        self.clones.remove(idx);
        Ok(())
    }

    /// Fuse a relative-displacement measurement d̂ between clone `clone_idx`
    /// (window start, pose i) and the current state (pose j), expressed in the
    /// clone's yaw frame: h = R_γᵀ(p_j − p_i). `sigma` holds per-axis standard
    /// deviations; each variance is floored at `variance_floor` before use.
    ///
    /// Measurements whose innovation covariance has a condition number above
    /// `max_condition` are rejected without touching the state. The caller
    /// normally marginalizes the clone afterwards, accepted or not.
    pub fn update(
        &mut self,
        clone_idx: usize,
        d_hat: &Vector3<f64>,
        sigma: &Vector3<f64>,
        variance_floor: f64,
        max_condition: f64,
    ) -> Result<UpdateReport> {
        if clone_idx >= self.clones.len() {
            return Err(EkfError::BadCloneIndex {
                idx: clone_idx,
                count: self.clones.len(),
            });
        }
        if !(d_hat.iter().all(|v| v.is_finite()) && sigma.iter().all(|v| v.is_finite())) {
            return Err(EkfError::Config(
                "measurement and sigma must be finite".into(),
            ));
        }
        let clone = self.clones[clone_idx];
        let (r_gamma, _degenerate) = yaw_rotation(&clone.r);
        let rg_t = r_gamma.matrix().transpose();
        let dp = self.state.p - clone.p;
        let innovation = d_hat - rg_t * dp;

        // H = ∂h/∂δx: +R_γᵀ on the live position error, −R_γᵀ on the clone
        // position error. R_γ depends on the clone's yaw alone, so only the
        // z-component of the clone attitude error enters:
        // ∂h/∂δθ_z = −R_γᵀ(e_z × (p_j − p_i)).
        let d = self.dim();
        let cb = NAV_DIM + clone_idx * CLONE_DIM;
        let mut h = DMatrix::<f64>::zeros(3, d);
        h.view_mut((0, POS), (3, 3)).copy_from(&rg_t);
        h.view_mut((0, cb + 3), (3, 3)).copy_from(&(-rg_t));
        let yaw_col = -(rg_t * Vector3::z().cross(&dp));
        for i in 0..3 {
            h[(i, cb + 2)] = yaw_col[i];
        }

        let mut r_meas = DMatrix::<f64>::zeros(3, 3);
        for i in 0..3 {
            r_meas[(i, i)] = sigma[i].powi(2).max(variance_floor);
        }
        let s = &h * &self.cov * h.transpose() + &r_meas;
        let eigenvalues = s.clone().symmetric_eigen().eigenvalues;
        let lmax = eigenvalues.max();
        let lmin = eigenvalues.min();
        let condition = if lmin <= 0.0 {
            f64::INFINITY
        } else {
            lmax / lmin
        };
        if condition > max_condition {
            return Ok(UpdateReport {
                accepted: false,
                innovation,
                condition,
            });
        }
        let Some(s_inv) = s.try_inverse() else {
            return Ok(UpdateReport {
                accepted: false,
                innovation,
                condition,
            });
        };

        let k = &self.cov * h.transpose() * s_inv;
        let dx = &k * DVector::from_column_slice(innovation.as_slice());

        let sub = |b: usize| Vector3::new(dx[b], dx[b + 1], dx[b + 2]);
        self.state.r = renormalize(&(exp_so3(&sub(THETA)) * self.state.r));
        self.state.v += sub(VEL);
        self.state.p += sub(POS);
        self.state.bg += sub(BG);
        self.state.ba += sub(BA);
        for (j, c) in self.clones.iter_mut().enumerate() {
            let b = NAV_DIM + j * CLONE_DIM;
            c.r = renormalize(&(exp_so3(&sub(b)) * c.r));
            c.p += sub(b + 3);
        }

        // Joseph form keeps the posterior covariance PSD under roundoff.
        let i_kh = DMatrix::identity(d, d) - &k * &h;
        self.cov = &i_kh * &self.cov * i_kh.transpose() + &k * &r_meas * k.transpose();
        self.symmetrize();

        Ok(UpdateReport {
            accepted: true,
            innovation,
            condition,
        })
    }

    /// Force exact symmetry by averaging mirrored entries.
    pub fn symmetrize(&mut self) {
        let d = self.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                let m = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = m;
                self.cov[(j, i)] = m;
            }
        }
    }

    /// Largest |P_ij − P_ji| over the covariance.
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                worst = worst.max((self.cov[(i, j)] - self.cov[(j, i)]).abs());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.cov.clone().symmetric_eigen().eigenvalues.min()
    }
}
