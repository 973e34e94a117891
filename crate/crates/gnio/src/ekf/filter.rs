//! The full fusion loop: strapdown propagation at IMU rate with windowed
//! relative-displacement updates from a pluggable measurement source.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::state::{Ekf, NavState};
use super::{EkfError, FilterConfig, Result};
use crate::data::{gravity_align, interpolate_pose, PoseSample, Sequence};
use crate::geometry::yaw_rotation;
use crate::network::GnioNet;

/// Everything a measurement source sees about one finished window. `x` holds
/// the gravity-aligned rows [ax, ay, az, wx, wy, wz] × n, aligned with the
/// filter's attitude estimate at the window start and corrected by its current
/// bias estimates.
#[derive(Clone, Copy, Debug)]
pub struct WindowContext<'a> {
    pub x: &'a [f64],
    pub n: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Supplies the displacement measurement (and its per-axis standard deviation)
/// for a finished window, or `None` to skip the update.
pub trait DisplacementSource {
    fn displacement(&mut self, ctx: &WindowContext) -> Option<(Vector3<f64>, Vector3<f64>)>;
}

/// Network-backed source: runs the displacement network on the window.
pub struct NetSource<'a> {
    net: &'a GnioNet,
}

impl<'a> NetSource<'a> {
    pub fn new(net: &'a GnioNet) -> Self {
        Self { net }
    }
}

impl DisplacementSource for NetSource<'_> {
    fn displacement(&mut self, ctx: &WindowContext) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let pred = self
            .net
            .predict_rows(ctx.x, ctx.n)
            .expect("run_filter sizes window rows for the network");
        Some((pred.displacement, pred.log_sigma.map(f64::exp)))
    }
}

/// Ground-truth source: reports the true displacement in the yaw frame of the
/// window start, optionally corrupted by white noise. Useful for closing the
/// loop without a trained network and for consistency checks.
pub struct OracleSource {
    gt: Vec<PoseSample>,
    /// Standard deviation reported to the filter.
    sigma: Vector3<f64>,
    /// Standard deviation of the noise actually added.
    noise_std: Vector3<f64>,
    max_gap: f64,
    rng: ChaCha8Rng,
}

impl OracleSource {
    pub fn new(
        gt: Vec<PoseSample>,
        sigma: Vector3<f64>,
        noise_std: Vector3<f64>,
        max_gap: f64,
        seed: u64,
    ) -> Self {
        Self {
            gt,
            sigma,
            noise_std,
            max_gap,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Exact displacements, reported with an isotropic `sigma` standard
    /// deviation.
    pub fn noiseless(gt: Vec<PoseSample>, sigma: f64, max_gap: f64) -> Self {
        Self::new(
            gt,
            Vector3::new(sigma, sigma, sigma),
            Vector3::zeros(),
            max_gap,
            0,
        )
    }
}

impl DisplacementSource for OracleSource {
    fn displacement(&mut self, ctx: &WindowContext) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let a = interpolate_pose(&self.gt, ctx.t_start, self.max_gap)
            .expect("window start lies inside the ground-truth span");
        let b = interpolate_pose(&self.gt, ctx.t_end, self.max_gap)
            .expect("window end lies inside the ground-truth span");
        let (r_gamma, _) = yaw_rotation(&a.orientation.to_rotation_matrix());
        let mut d = r_gamma.inverse() * (b.position - a.position);
        for i in 0..3 {
            d[i] += self.noise_std[i] * self.rng.sample::<f64, _>(StandardNormal);
        }
        Some((d, self.sigma))
    }
}

/// No measurements at all: pure strapdown dead reckoning.
pub struct NoSource;

impl DisplacementSource for NoSource {
    fn displacement(&mut self, _ctx: &WindowContext) -> Option<(Vector3<f64>, Vector3<f64>)> {
        None
    }
}

/// One attempted displacement update.
#[derive(Clone, Copy, Debug)]
pub struct UpdateLog {
    pub t: f64,
    pub accepted: bool,
    pub innovation: Vector3<f64>,
    pub condition: f64,
}

/// Result of a full filter run.
#[derive(Clone, Debug)]
pub struct FilterOutput {
    /// Estimated pose at every IMU sample time.
    pub estimate: Vec<PoseSample>,
    pub updates: Vec<UpdateLog>,
    /// Final filter, for covariance inspection.
    pub filter: Ekf,
}

/// Initial state taken from the first ground-truth poses: position and
/// orientation from the first sample, velocity by finite difference, biases
/// zero.
pub fn init_from_ground_truth(seq: &Sequence) -> Result<NavState> {
    let first = seq
        .gt
        .first()
        .ok_or_else(|| EkfError::Config("ground truth required for initialization".into()))?;
    let v = match seq.gt.get(1) {
        Some(second) if second.t > first.t => (second.position - first.position) / (second.t - first.t),
        _ => Vector3::zeros(),
    };
    Ok(NavState {
        p: first.position,
        v,
        r: first.orientation.to_rotation_matrix(),
        bg: Vector3::zeros(),
        ba: Vector3::zeros(),
        t: seq.imu.first().map_or(first.t, |s| s.t),
    })
}

/// Run the whole fusion loop over a sequence.
///
/// Every IMU interval is propagated with the trapezoid-averaged measurement of
/// its two endpoint samples. The pose is cloned at every stride tick; once a
/// clone is a full window old, the window's aligned rows go to `source` and
/// the returned displacement is fused against that clone, which is then
/// marginalized (also when the source declines or the update is rejected).
pub fn run_filter(
    seq: &Sequence,
    source: &mut dyn DisplacementSource,
    config: &FilterConfig,
) -> Result<FilterOutput> {
    let init = init_from_ground_truth(seq)?;
    run_filter_with_init(seq, source, config, init)
}

/// [`run_filter`] with an explicit initial state instead of one taken from the
/// ground truth.
pub fn run_filter_with_init(
    seq: &Sequence,
    source: &mut dyn DisplacementSource,
    config: &FilterConfig,
    init: NavState,
) -> Result<FilterOutput> {
    config.validate()?;
    if !(seq.rate.is_finite() && seq.rate > 0.0) {
        return Err(EkfError::Config(format!("invalid sample rate {}", seq.rate)));
    }
    let nwin = whole_samples(config.window_duration, seq.rate, "window_duration")?;
    let stride = whole_samples(config.update_stride, seq.rate, "update_stride")?;
    if nwin % stride != 0 {
        return Err(EkfError::Config(format!(
            "window_duration ({nwin} samples) must be an integer multiple of update_stride ({stride} samples)"
        )));
    }
    if config.clone_capacity * stride < nwin {
        return Err(EkfError::Config(format!(
            "clone_capacity {} × update_stride {} samples cannot span a {} sample window",
            config.clone_capacity, stride, nwin
        )));
    }
    if seq.imu.len() <= nwin {
        return Err(EkfError::SequenceTooShort {
            need: nwin,
            have: seq.imu.len(),
        });
    }

    let mut ekf = Ekf::new(init, &config.init, config.noise, config.clone_capacity);
    let imu = &seq.imu;
    let max_dt = 2.0 / seq.rate;

    let mut estimate = Vec::with_capacity(imu.len());
    let mut updates = Vec::new();
    let pose_of = |ekf: &Ekf, t: f64| PoseSample {
        t,
        position: ekf.state.p,
        orientation: UnitQuaternion::from_rotation_matrix(&ekf.state.r),
    };
    estimate.push(pose_of(&ekf, imu[0].t));
    ekf.clone_now(0);

    for k in 1..imu.len() {
        let dt = imu[k].t - imu[k - 1].t;
        if !(dt > 0.0 && dt <= max_dt) {
            return Err(EkfError::Config(format!(
                "sample spacing {dt} s at index {k} is outside (0, {max_dt}] for rate {} Hz",
                seq.rate
            )));
        }
        let gyro = 0.5 * (imu[k - 1].gyro + imu[k].gyro);
        let accel = 0.5 * (imu[k - 1].accel + imu[k].accel);
        ekf.propagate(&gyro, &accel, dt)?;
        ekf.state.t = imu[k].t;
        estimate.push(pose_of(&ekf, imu[k].t));

        if k % stride != 0 {
            continue;
        }
        if k >= nwin {
            if let Some(ci) = ekf.clones.iter().position(|c| c.sample_idx == k - nwin) {
                let clone_r = ekf.clones[ci].r;
                let (bg, ba) = (ekf.state.bg, ekf.state.ba);
                let rows = gravity_align(&imu[k - nwin..k], &clone_r, &bg, &ba)?;
                let ctx = WindowContext {
                    x: &rows,
                    n: nwin,
                    t_start: imu[k - nwin].t,
                    t_end: imu[k].t,
                };
                if let Some((d_hat, sigma)) = source.displacement(&ctx) {
                    let report = ekf.update(
                        ci,
                        &d_hat,
                        &sigma,
                        config.variance_floor,
                        config.max_condition,
                    )?;
                    updates.push(UpdateLog {
                        t: imu[k].t,
                        accepted: report.accepted,
                        innovation: report.innovation,
                        condition: report.condition,
                    });
                }
                ekf.marginalize(ci)?;
            }
        }
        ekf.clone_now(k);
    }

    Ok(FilterOutput {
        estimate,
        updates,
        filter: ekf,
    })
}

fn whole_samples(seconds: f64, rate: f64, name: &str) -> Result<usize> {
    let f = seconds * rate;
    if (f - f.round()).abs() > 1e-9 || f.round() < 1.0 {
        return Err(EkfError::Config(format!(
            "{name} of {seconds} s is not a whole positive number of samples at {rate} Hz"
        )));
    }
    Ok(f.round() as usize)
}

#[cfg(test)]
mod tests {
    use super::super::state::POS;
    use super::super::{InitCov, NoiseParams};
    use super::*;

    fn quiet_filter_noise() -> NoiseParams {
        NoiseParams {
            sigma_g: 0.0,
            sigma_a: 0.0,
            sigma_bg: 0.0,
            sigma_ba: 0.0,
        }
    }
    use crate::data::{synth_generate, Axis, NoiseSpec, SegmentSpec, SynthSpec, Window};
    use crate::network::{GnioNet, NetConfig};
    use nalgebra::{Matrix3, Rotation3};

    fn walk_spec(seed: u64, rate: u32, noise: NoiseSpec) -> SynthSpec {
        SynthSpec {
            rate,
            seed,
            noise,
            segments: vec![
                SegmentSpec::Stationary { duration: 2.0 },
                SegmentSpec::ConstVel {
                    velocity: [0.5, 0.2, 0.0],
                    duration: 5.0,
                },
                SegmentSpec::Sinusoid {
                    axis: Axis::X,
                    amplitude: 0.8,
                    frequency: 0.5,
                    duration: 6.0,
                },
                SegmentSpec::ArcTurn {
                    radius: 2.0,
                    speed: 0.8,
                    duration: 5.0,
                    clockwise: false,
                },
                SegmentSpec::Stationary { duration: 2.0 },
            ],
        }
    }

    #[test]
    fn oracle_measurements_keep_the_estimate_on_the_truth() {
        let seq = synth_generate(&walk_spec(5, 100, NoiseSpec::noiseless())).unwrap();
        let mut source = OracleSource::noiseless(seq.gt.clone(), 1e-3, 0.05);
        // Default (nonzero) process noise keeps the filter responsive to the
        // small integration residuals at segment joins.
        let config = FilterConfig::default();
        let out = run_filter(&seq, &mut source, &config).unwrap();

        assert_eq!(out.estimate.len(), seq.imu.len());
        assert!(out.updates.len() > 150, "only {} updates", out.updates.len());
        assert!(out.updates.iter().all(|u| u.accepted));

        let err_final =
            (out.estimate.last().unwrap().position - seq.gt.last().unwrap().position).norm();
        assert!(err_final < 1e-3, "final position error {err_final} m");
        let worst = out
            .estimate
            .iter()
            .zip(&seq.gt)
            .map(|(e, g)| (e.position - g.position).norm())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-2, "worst position error {worst} m");
    }

    #[test]
    fn dead_reckoning_error_grows_superlinearly() {
        let noise = NoiseSpec {
            sigma_g: 0.0,
            sigma_a: 0.0,
            bg: [2e-3, 1e-3, 0.0],
            ba: [0.0; 3],
        };
        let spec = SynthSpec {
            rate: 100,
            seed: 9,
            noise,
            segments: vec![SegmentSpec::ConstVel {
                velocity: [0.3, 0.0, 0.0],
                duration: 40.0,
            }],
        };
        let seq = synth_generate(&spec).unwrap();
        let mut config = FilterConfig::default();
        config.noise = quiet_filter_noise();
        config.update_stride = 0.5;
        config.clone_capacity = 2;
        let out = run_filter(&seq, &mut NoSource, &config).unwrap();
        assert!(out.updates.is_empty());

        let err_at = |t: f64| {
            let k = (t * 100.0).round() as usize;
            (out.estimate[k].position - seq.gt[k].position).norm()
        };
        let (e10, e40) = (err_at(10.0), err_at(40.0));
        assert!(e10 > 0.0);
        assert!(
            e40 > 8.0 * e10,
            "growth not superlinear: err(10 s) = {e10}, err(40 s) = {e40}"
        );
    }

    #[test]
    fn rejected_updates_leave_the_trajectory_at_dead_reckoning() {
        struct IllConditioned;
        impl DisplacementSource for IllConditioned {
            fn displacement(
                &mut self,
                _ctx: &WindowContext,
            ) -> Option<(Vector3<f64>, Vector3<f64>)> {
                Some((Vector3::zeros(), Vector3::new(1e6, 1e-9, 1e-9)))
            }
        }

        let spec = walk_spec(7, 100, NoiseSpec::noiseless());
        let seq = synth_generate(&spec).unwrap();
        let mut config = FilterConfig::default();
        config.noise = quiet_filter_noise();
        config.update_stride = 0.5;
        config.clone_capacity = 2;

        let rejected = run_filter(&seq, &mut IllConditioned, &config).unwrap();
        assert!(!rejected.updates.is_empty());
        assert!(rejected.updates.iter().all(|u| !u.accepted));
        assert!(rejected.updates.iter().all(|u| u.condition > 1e12));

        let open_loop = run_filter(&seq, &mut NoSource, &config).unwrap();
        for (a, b) in rejected.estimate.iter().zip(&open_loop.estimate) {
            assert_eq!(a.position, b.position);
        }
    }

    #[test]
    fn covariance_stays_well_formed_through_a_noisy_run() {
        let noise = NoiseSpec {
            sigma_g: 1e-3,
            sigma_a: 1e-2,
            bg: [0.0; 3],
            ba: [0.0; 3],
        };
        let seq = synth_generate(&walk_spec(11, 100, noise.clone())).unwrap();
        let mut source = OracleSource::new(
            seq.gt.clone(),
            Vector3::new(0.01, 0.01, 0.01),
            Vector3::new(0.01, 0.01, 0.01),
            0.05,
            42,
        );
        let mut config = FilterConfig::default();
        config.noise = NoiseParams::from_sample_std(&noise, 100.0);
        let out = run_filter(&seq, &mut source, &config).unwrap();

        assert!(out.filter.max_asymmetry() < 1e-9);
        assert!(out.filter.min_eigenvalue() >= -1e-9);
        let err_final =
            (out.estimate.last().unwrap().position - seq.gt.last().unwrap().position).norm();
        assert!(err_final < 0.2, "final error {err_final} m with noisy IMU");
    }

    #[test]
    fn nees_stays_inside_the_chi_square_envelope() {
        let noise = NoiseSpec {
            sigma_g: 1e-3,
            sigma_a: 1e-2,
            bg: [0.0; 3],
            ba: [0.0; 3],
        };
        let mut config = FilterConfig::default();
        config.noise = NoiseParams::from_sample_std(&noise, 100.0);
        config.init = InitCov {
            theta: 1e-6,
            v: 1e-4,
            p: 1e-6,
            bg: 0.0,
            ba: 0.0,
        };
        config.update_stride = 0.5;
        config.clone_capacity = 2;
        let sigma_meas = 0.01;

        let runs = 50;
        let mut nees_sum = 0.0;
        for run in 0..runs {
            let spec = SynthSpec {
                rate: 100,
                seed: 1000 + run,
                noise: noise.clone(),
                segments: vec![SegmentSpec::ConstVel {
                    velocity: [0.4, -0.2, 0.0],
                    duration: 10.0,
                }],
            };
            let seq = synth_generate(&spec).unwrap();

            // Start the filter from a state drawn around the truth so the
            // initial covariance is honest.
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + run);
            let mut draw3 = |std: f64| {
                Vector3::new(
                    std * rng.sample::<f64, _>(StandardNormal),
                    std * rng.sample::<f64, _>(StandardNormal),
                    std * rng.sample::<f64, _>(StandardNormal),
                )
            };
            let dtheta = draw3(config.init.theta.sqrt());
            let dv = draw3(config.init.v.sqrt());
            let dp = draw3(config.init.p.sqrt());
            let truth = init_from_ground_truth(&seq).unwrap();
            let init = NavState {
                p: truth.p - dp,
                v: truth.v - dv,
                r: UnitQuaternion::from_scaled_axis(-dtheta).to_rotation_matrix() * truth.r,
                bg: Vector3::zeros(),
                ba: Vector3::zeros(),
                t: truth.t,
            };

            let mut source = OracleSource::new(
                seq.gt.clone(),
                Vector3::new(sigma_meas, sigma_meas, sigma_meas),
                Vector3::new(sigma_meas, sigma_meas, sigma_meas),
                0.05,
                9000 + run,
            );
            let out = run_filter_with_init(&seq, &mut source, &config, init).unwrap();

            let err = seq.gt.last().unwrap().position - out.estimate.last().unwrap().position;
            let ppp: Matrix3<f64> = out.filter.cov.fixed_view::<3, 3>(POS, POS).into_owned();
            let nees = (err.transpose() * ppp.try_inverse().unwrap() * err)[(0, 0)];
            nees_sum += nees;
        }
        let mean = nees_sum / runs as f64;
        // Mean of 50 three-dimensional NEES values: 50·mean ~ χ²(150), whose
        // central 95% interval is [118.0, 185.8].
        assert!(
            (2.36..=3.71).contains(&mean),
            "mean position NEES {mean} outside the 95% envelope [2.36, 3.71]"
        );
    }

    #[test]
    fn net_source_reports_the_network_prediction() {
        let net = GnioNet::new(NetConfig::tiny(), 3).unwrap();
        let seq = synth_generate(&walk_spec(13, 100, NoiseSpec::noiseless())).unwrap();
        let windows = crate::data::window_stream(&seq, 1.0, 1.0).unwrap();
        let w: &Window = &windows[3];

        let mut source = NetSource::new(&net);
        let ctx = WindowContext {
            x: &w.x,
            n: w.n,
            t_start: w.t_start,
            t_end: w.t_end,
        };
        let (d, sigma) = source.displacement(&ctx).unwrap();
        let pred = net.predict_rows(&w.x, w.n).unwrap();
        assert_eq!(d, pred.displacement);
        assert_eq!(sigma, pred.log_sigma.map(f64::exp));
        assert!(sigma.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn bad_cadence_and_short_sequences_are_rejected() {
        let seq = synth_generate(&walk_spec(3, 100, NoiseSpec::noiseless())).unwrap();

        let mut config = FilterConfig::default();
        config.update_stride = 0.3;
        let err = run_filter(&seq, &mut NoSource, &config).unwrap_err();
        assert!(matches!(err, EkfError::Config(_)), "{err}");

        let mut config = FilterConfig::default();
        config.update_stride = 0.0137;
        let err = run_filter(&seq, &mut NoSource, &config).unwrap_err();
        assert!(matches!(err, EkfError::Config(_)), "{err}");

        let mut config = FilterConfig::default();
        config.clone_capacity = 2;
        let err = run_filter(&seq, &mut NoSource, &config).unwrap_err();
        assert!(matches!(err, EkfError::Config(_)), "{err}");

        let short = SynthSpec {
            rate: 100,
            seed: 1,
            noise: NoiseSpec::noiseless(),
            segments: vec![SegmentSpec::Stationary { duration: 0.5 }],
        };
        let short_seq = synth_generate(&short).unwrap();
        let err = run_filter(&short_seq, &mut NoSource, &FilterConfig::default()).unwrap_err();
        assert!(matches!(err, EkfError::SequenceTooShort { .. }), "{err}");
    }

    #[test]
    fn initialization_takes_pose_and_velocity_from_ground_truth() {
        let seq = synth_generate(&walk_spec(21, 100, NoiseSpec::noiseless())).unwrap();
        let init = init_from_ground_truth(&seq).unwrap();
        assert_eq!(init.p, seq.gt[0].position);
        assert_eq!(init.bg, Vector3::zeros());
        let fd = (seq.gt[1].position - seq.gt[0].position) / (seq.gt[1].t - seq.gt[0].t);
        assert_eq!(init.v, fd);
        assert_eq!(
            init.r,
            Rotation3::from(seq.gt[0].orientation)
        );
    }
}
