use super::*;
use crate::autodiff::Tape;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * 6).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn tiny4() -> NetConfig {
    // Small but structurally complete: all stages, several heads.
    NetConfig {
        d: 8,
        m: 3,
        heads: 2,
        channels: [4, 4, 4, 8],
        gate_fn: GateFn::Tanh,
        scale_fn: ScaleFn::Softplus,
    }
}

mod straight_line_reference {
    //! An independent layer-by-layer encoder implementation used as the oracle
    //! for the planned/taped one. Plain loops, bounds handled by explicit
    //! range checks rather than precomputed tap windows.

    pub fn conv1d(
        x: &[f64],
        c_in: usize,
        l_in: usize,
        w: &[f64],
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> (Vec<f64>, usize) {
        let l_out = (l_in + 2 * pad - k) / stride + 1;
        let mut y = vec![0.0; c_out * l_out];
        for co in 0..c_out {
            for lo in 0..l_out {
                let mut acc = 0.0;
                for ci in 0..c_in {
                    for kk in 0..k {
                        let idx = (lo * stride + kk) as isize - pad as isize;
                        if idx >= 0 && (idx as usize) < l_in {
                            acc += x[ci * l_in + idx as usize] * w[(co * c_in + ci) * k + kk];
                        }
                    }
                }
                y[co * l_out + lo] = acc;
            }
        }
        (y, l_out)
    }

    pub fn bn_eval(
        x: &[f64],
        c: usize,
        l: usize,
        gamma: &[f64],
        beta: &[f64],
        mean: &[f64],
        var: &[f64],
    ) -> Vec<f64> {
        let mut y = vec![0.0; c * l];
        for ch in 0..c {
            let inv = 1.0 / (var[ch] + 1e-5).sqrt();
            for i in 0..l {
                y[ch * l + i] = gamma[ch] * (x[ch * l + i] - mean[ch]) * inv + beta[ch];
            }
        }
        y
    }

    pub fn relu(x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| v.max(0.0)).collect()
    }

    pub fn gap(x: &[f64], c: usize, l: usize) -> Vec<f64> {
        (0..c)
            .map(|ch| x[ch * l..(ch + 1) * l].iter().sum::<f64>() / l as f64)
            .collect()
    }
}

/// Encoder oracle: the taped forward must match an independently written
/// sequence of the same layers, parameter for parameter.
#[test]
fn encoder_matches_straight_line_reference() {
    use straight_line_reference as sl;
    let config = NetConfig {
        d: 64,
        m: 8,
        heads: 4,
        channels: [8, 16, 32, 64],
        gate_fn: GateFn::Tanh,
        scale_fn: ScaleFn::Softplus,
    };
    let net = GnioNet::new(config.clone(), 42).unwrap();
    let n = 100usize;
    let rows = random_rows(n, 7);

    // Reference path, eval mode (fresh running stats: mean 0, var 1).
    let p = |name: &str| net.params.by_name(name).unwrap();
    let r = |name: &str| net.running.by_name(name).unwrap();
    let mut x = vec![0.0; 6 * n];
    for i in 0..n {
        for c in 0..6 {
            x[c * n + i] = rows[i * 6 + c];
        }
    }
    let bn = |x: &[f64], c: usize, l: usize, prefix: &str| {
        sl::bn_eval(
            x,
            c,
            l,
            &p(&format!("{prefix}.gamma")).data,
            &p(&format!("{prefix}.beta")).data,
            &r(&format!("{prefix}.running_mean")).data,
            &r(&format!("{prefix}.running_var")).data,
        )
    };
    let (mut h, mut l) = sl::conv1d(&x, 6, n, &p("enc.stem.conv.w").data, config.channels[0], 7, 2, 3);
    h = sl::relu(&bn(&h, config.channels[0], l, "enc.stem.bn"));
    let mut c_in = config.channels[0];
    for (si, &c_out) in config.channels.iter().enumerate() {
        for bi in 0..2 {
            let stride = if si > 0 && bi == 0 { 2 } else { 1 };
            let prefix = format!("enc.s{si}.b{bi}");
            let (y1, l1) = sl::conv1d(
                &h,
                c_in,
                l,
                &p(&format!("{prefix}.conv1.w")).data,
                c_out,
                3,
                stride,
                1,
            );
            let y1 = sl::relu(&bn(&y1, c_out, l1, &format!("{prefix}.bn1")));
            let (y2, l2) = sl::conv1d(&y1, c_out, l1, &p(&format!("{prefix}.conv2.w")).data, c_out, 3, 1, 1);
            let y2 = bn(&y2, c_out, l2, &format!("{prefix}.bn2"));
            let skip = if stride != 1 || c_in != c_out {
                let (s, ls) = sl::conv1d(
                    &h,
                    c_in,
                    l,
                    &p(&format!("{prefix}.down.conv.w")).data,
                    c_out,
                    1,
                    stride,
                    0,
                );
                assert_eq!(ls, l2);
                bn(&s, c_out, l2, &format!("{prefix}.down.bn"))
            } else {
                h.clone()
            };
            h = sl::relu(&y2.iter().zip(&skip).map(|(a, b)| a + b).collect::<Vec<_>>());
            l = l2;
            c_in = c_out;
        }
    }
    let reference = sl::gap(&h, c_in, l);

    let predicted = net.predict_rows(&rows, n).unwrap();
    assert_eq!(predicted.feature.len(), reference.len());
    for (a, b) in predicted.feature.iter().zip(&reference) {
        assert_relative_eq!(*a, *b, epsilon = 1e-9, max_relative = 1e-9);
    }
}

#[test]
fn zero_input_gives_finite_feature_of_dim_d() {
    let net = GnioNet::new(tiny4(), 0).unwrap();
    let rows = vec![0.0; 100 * 6];
    let pred = net.predict_rows(&rows, 100).unwrap();
    assert_eq!(pred.feature.len(), 8);
    assert!(pred.feature.iter().all(|v| v.is_finite()));
}

#[test]
fn eval_forward_is_bit_identical_across_calls() {
    let net = GnioNet::new(tiny4(), 5).unwrap();
    let rows = random_rows(100, 1);
    let a = net.predict_rows(&rows, 100).unwrap();
    let b = net.predict_rows(&rows, 100).unwrap();
    for i in 0..3 {
        assert_eq!(
            a.displacement[i].to_bits(),
            b.displacement[i].to_bits()
        );
        assert_eq!(a.sigma_diag[i].to_bits(), b.sigma_diag[i].to_bits());
    }
    assert_eq!(a.feature, b.feature);
}

#[test]
fn wrong_channel_count_is_rejected() {
    let net = GnioNet::new(tiny4(), 0).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(&[5, 100], vec![0.0; 500], false).unwrap();
    let staged = net.stage(&mut tape, false);
    assert!(matches!(
        net.forward(&mut tape, x, &staged, false),
        Err(NetworkError::Input(_))
    ));
}

#[test]
fn single_prototype_attention_returns_its_value_row() {
    let mut cfg = tiny4();
    cfg.m = 1;
    cfg.heads = 1;
    let net = GnioNet::new(cfg.clone(), 3).unwrap();
    let mut tape = Tape::new();
    let staged = net.stage(&mut tape, false);
    let f = tape
        .leaf(&[cfg.d], (0..cfg.d).map(|i| i as f64 * 0.3 - 1.0).collect(), false)
        .unwrap();
    let (ctx, weights) = net.bank_attend(&mut tape, f, &staged).unwrap();
    assert_eq!(weights.len(), 1);
    assert_eq!(tape.data(weights[0]), &[1.0]);
    // c must equal (M W_V) row 0 exactly: the convex combination has one term.
    let m = net.params.by_name("bank.m").unwrap();
    let wv = net.params.by_name("bank.wv").unwrap();
    let expected: Vec<f64> = (0..cfg.d)
        .map(|j| {
            (0..cfg.d)
                .map(|k| m.data[k] * wv.data[k * cfg.d + j])
                .sum::<f64>()
        })
        .collect();
    for (a, b) in tape.data(ctx).iter().zip(&expected) {
        assert_relative_eq!(*a, *b, epsilon = 1e-12);
    }
}

#[test]
fn zero_query_projection_gives_uniform_attention() {
    let mut cfg = tiny4();
    cfg.m = 5;
    cfg.heads = 1;
    let mut net = GnioNet::new(cfg.clone(), 3).unwrap();
    net.set_param("bank.wq", vec![0.0; cfg.d * cfg.d]).unwrap();
    let mut tape = Tape::new();
    let staged = net.stage(&mut tape, false);
    let f = tape
        .leaf(&[cfg.d], (0..cfg.d).map(|i| (i as f64).sin()).collect(), false)
        .unwrap();
    let (ctx, weights) = net.bank_attend(&mut tape, f, &staged).unwrap();
    for &w in tape.data(weights[0]) {
        assert_relative_eq!(w, 0.2, epsilon = 1e-12);
    }
    // Context is the mean of the value rows.
    let m = net.params.by_name("bank.m").unwrap();
    let wv = net.params.by_name("bank.wv").unwrap();
    for j in 0..cfg.d {
        let mut mean = 0.0;
        for row in 0..cfg.m {
            let mut v = 0.0;
            for k in 0..cfg.d {
                v += m.data[row * cfg.d + k] * wv.data[k * cfg.d + j];
            }
            mean += v / cfg.m as f64;
        }
        assert_relative_eq!(tape.data(ctx)[j], mean, epsilon = 1e-9);
    }
}

/// Hand-computed two-prototype attention: integer parameter matrices, explicit
/// softmax arithmetic, no tensor machinery.
#[test]
fn attention_matches_hand_computation() {
    let cfg = NetConfig {
        d: 4,
        m: 2,
        heads: 1,
        channels: [4, 4, 4, 4],
        gate_fn: GateFn::Tanh,
        scale_fn: ScaleFn::Softplus,
    };
    let mut net = GnioNet::new(cfg.clone(), 0).unwrap();
    let eye = |n: usize| {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    };
    net.set_param("bank.m", vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        .unwrap();
    net.set_param("bank.wq", eye(4)).unwrap();
    net.set_param("bank.wk", eye(4)).unwrap();
    net.set_param(
        "bank.wv",
        vec![
            1.0, 2.0, 3.0, 4.0, //
            5.0, 6.0, 7.0, 8.0, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0,
        ],
    )
    .unwrap();
    let mut tape = Tape::new();
    let staged = net.stage(&mut tape, false);
    let f = tape.leaf(&[4], vec![2.0, 1.0, 0.0, 0.0], false).unwrap();
    let (ctx, weights) = net.bank_attend(&mut tape, f, &staged).unwrap();

    // Scores: q = f, K = M, so s = (f·M0, f·M1)/sqrt(4) = (1.0, 0.5).
    let (e1, e2) = (1.0f64.exp(), 0.5f64.exp());
    let (a1, a2) = (e1 / (e1 + e2), e2 / (e1 + e2));
    let v0 = [1.0, 2.0, 3.0, 4.0]; // row 0 of M·Wv = row 0 of Wv
    let v1 = [5.0, 6.0, 7.0, 8.0];
    let expected: Vec<f64> = (0..4).map(|j| a1 * v0[j] + a2 * v1[j]).collect();
    assert_relative_eq!(tape.data(weights[0])[0], a1, epsilon = 1e-12);
    assert_relative_eq!(tape.data(weights[0])[1], a2, epsilon = 1e-12);
    for (got, want) in tape.data(ctx).iter().zip(&expected) {
        assert_relative_eq!(*got, *want, epsilon = 1e-12);
    }
}

#[test]
fn attention_weights_are_a_distribution_per_head() {
    let net = GnioNet::new(tiny4(), 9).unwrap();
    let rows = random_rows(100, 4);
    let pred = net.predict_rows(&rows, 100).unwrap();
    assert_eq!(pred.attention.len(), 2);
    for head in &pred.attention {
        assert_eq!(head.len(), 3);
        let s: f64 = head.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(head.iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn fuse_is_elementwise_sum() {
    let net = GnioNet::new(tiny4(), 2).unwrap();
    let rows = random_rows(100, 11);
    let mut tape = Tape::new();
    let x = input_from_rows(&mut tape, &rows, 100).unwrap();
    let staged = net.stage(&mut tape, false);
    let ids = net.forward(&mut tape, x, &staged, false).unwrap();
    let f = tape.data(ids.feature);
    let c = tape.data(ids.context);
    let h = tape.data(ids.fused);
    for i in 0..8 {
        assert_eq!(h[i].to_bits(), (f[i] + c[i]).to_bits());
    }
}

#[test]
fn gate_zero_silences_every_scale_variant() {
    for scale_fn in [
        ScaleFn::Softplus,
        ScaleFn::PosElu,
        ScaleFn::Abs,
        ScaleFn::Exp,
        ScaleFn::Linear,
    ] {
        let mut cfg = tiny4();
        cfg.scale_fn = scale_fn;
        let mut net = GnioNet::new(cfg, 6).unwrap();
        net.set_param("head.gate.w", vec![0.0; 3 * 8]).unwrap();
        net.set_param("head.gate.b", vec![0.0; 3]).unwrap();
        let pred = net.predict_rows(&random_rows(100, 3), 100).unwrap();
        for i in 0..3 {
            assert_eq!(pred.gate[i], 0.0);
            assert_eq!(pred.displacement[i], 0.0, "scale_fn {scale_fn:?}");
        }
    }
}

#[test]
fn zero_scale_preactivation_gives_ln_two_under_softplus() {
    let mut net = GnioNet::new(tiny4(), 6).unwrap();
    net.set_param("head.scale.w", vec![0.0; 3 * 8]).unwrap();
    net.set_param("head.scale.b", vec![0.0; 3]).unwrap();
    let pred = net.predict_rows(&random_rows(100, 3), 100).unwrap();
    for i in 0..3 {
        assert_relative_eq!(pred.scale[i], std::f64::consts::LN_2, epsilon = 1e-12);
    }
}

#[test]
fn displacement_is_scale_times_gate() {
    // s̃ = (1, 2, 0.5), g = (-0.5, 0, 0.8) -> d̂ = (-0.5, 0, 0.4)
    let mut tape = Tape::new();
    let s = tape.leaf(&[3], vec![1.0, 2.0, 0.5], false).unwrap();
    let g = tape.leaf(&[3], vec![-0.5, 0.0, 0.8], false).unwrap();
    let d = tape.mul(s, g).unwrap();
    assert_eq!(tape.data(d), &[-0.5, 0.0, 0.4]);
}

#[test]
fn gated_magnitude_is_bounded_by_scale() {
    for gate_fn in [GateFn::Tanh, GateFn::Sigmoid] {
        let mut cfg = tiny4();
        cfg.gate_fn = gate_fn;
        let net = GnioNet::new(cfg, 12).unwrap();
        for seed in 0..5 {
            let pred = net.predict_rows(&random_rows(100, 100 + seed), 100).unwrap();
            for i in 0..3 {
                assert!(pred.scale[i] >= 0.0);
                assert!(
                    pred.displacement[i].abs() <= pred.scale[i] + 1e-15,
                    "|d|={} > s={}",
                    pred.displacement[i].abs(),
                    pred.scale[i]
                );
                match gate_fn {
                    GateFn::Tanh => assert!(pred.gate[i].abs() <= 1.0),
                    GateFn::Sigmoid => assert!((0.0..=1.0).contains(&pred.gate[i])),
                }
            }
        }
    }
}

#[test]
fn covariance_is_exp_of_twice_log_sigma() {
    let net = GnioNet::new(tiny4(), 8).unwrap();
    let pred = net.predict_rows(&random_rows(100, 21), 100).unwrap();
    for i in 0..3 {
        assert!(pred.sigma_diag[i] > 0.0);
        assert_relative_eq!(
            pred.sigma_diag[i],
            (2.0 * pred.log_sigma[i]).exp(),
            epsilon = 1e-12
        );
    }
    let det: f64 = pred.sigma_diag.iter().product();
    let sum_u: f64 = pred.log_sigma.iter().sum();
    assert_relative_eq!(det, (2.0 * sum_u).exp(), max_relative = 1e-12);
}

#[test]
fn log_variance_fixed_points_map_to_expected_covariance() {
    let mut net = GnioNet::new(tiny4(), 6).unwrap();
    let rows = random_rows(100, 3);
    // u = (0,0,0) -> identity covariance diagonal.
    net.set_param("head.logvar.w", vec![0.0; 3 * 8]).unwrap();
    net.set_param("head.logvar.b", vec![0.0; 3]).unwrap();
    let pred = net.predict_rows(&rows, 100).unwrap();
    assert_eq!(pred.sigma_diag, Vector3::new(1.0, 1.0, 1.0));
    // u = (ln 2, 0, 0) -> diag(4, 1, 1).
    net.set_param("head.logvar.b", vec![std::f64::consts::LN_2, 0.0, 0.0])
        .unwrap();
    let pred = net.predict_rows(&rows, 100).unwrap();
    assert_relative_eq!(pred.sigma_diag[0], 4.0, epsilon = 1e-12);
    assert_eq!(pred.sigma_diag[1], 1.0);
    assert_eq!(pred.sigma_diag[2], 1.0);
}

#[test]
fn gradients_reach_every_parameter() {
    let net = GnioNet::new(tiny4(), 13).unwrap();
    let rows = random_rows(100, 30);
    let mut tape = Tape::new();
    let x = input_from_rows(&mut tape, &rows, 100).unwrap();
    let staged = net.stage(&mut tape, true);
    let ids = net.forward(&mut tape, x, &staged, true).unwrap();
    let d2 = tape.mul(ids.displacement, ids.displacement).unwrap();
    let a = tape.sum(d2);
    let b = tape.sum(ids.log_sigma);
    let loss = tape.add(a, b).unwrap();
    let loss = tape.sum(loss);
    tape.backward(loss).unwrap();
    let mut zero_tensors = Vec::new();
    for (i, p) in net.params.iter().enumerate() {
        let g = tape
            .grad(staged.ids[i])
            .unwrap_or_else(|| panic!("no gradient for {}", p.name));
        if g.iter().all(|&v| v == 0.0) {
            zero_tensors.push(p.name.clone());
        }
    }
    assert!(
        zero_tensors.is_empty(),
        "parameters with all-zero gradients: {zero_tensors:?}"
    );
}

#[test]
fn full_config_parameter_count_near_four_point_nine_million() {
    let net = GnioNet::new(NetConfig::full(), 0).unwrap();
    let count = net.param_count() as f64;
    let target = 4.90e6;
    assert!(
        (count - target).abs() / target < 0.30,
        "parameter count {count} outside ±30% of {target}"
    );
}

#[test]
fn config_json_round_trips_and_rejects_unknown_fields() {
    let text = r#"{"D": 64, "m": 8, "heads": 4, "channels": [8, 16, 32, 64],
                   "gate_fn": "tanh", "scale_fn": "softplus"}"#;
    let cfg: NetConfig = serde_json::from_str(text).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.d, 64);
    let back = serde_json::to_string(&cfg).unwrap();
    assert!(back.contains("\"D\":64"));
    let bad = r#"{"D": 64, "m": 8, "heads": 4, "channels": [8, 16, 32, 64],
                  "gate_fn": "tanh", "scale_fn": "softplus", "dropout": 0.5}"#;
    let err = serde_json::from_str::<NetConfig>(bad).unwrap_err();
    assert!(err.to_string().contains("dropout"));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = tiny4();
    c.heads = 3; // 8 % 3 != 0
    assert!(c.validate().is_err());
    let mut c = tiny4();
    c.d = 16; // != channels[3]
    assert!(c.validate().is_err());
    let mut c = tiny4();
    c.m = 0;
    assert!(c.validate().is_err());
}

#[test]
fn checkpoint_round_trip_reproduces_predictions_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.gnio");
    let mut net = GnioNet::new(tiny4(), 77).unwrap();
    // Perturb running stats so the buffers are exercised too.
    net.update_running_stats(
        &(0..net.bn_layer_count())
            .map(|l| {
                let (mi, _) = net.plan.running_indices(l);
                let c = net.running.get(mi).shape[0];
                (vec![0.25; c], vec![1.5; c])
            })
            .collect::<Vec<_>>(),
        0.1,
    );
    net.save(&path).unwrap();

    let mut restored = GnioNet::new(tiny4(), 123).unwrap();
    restored.load(&path).unwrap();
    let rows = random_rows(100, 2);
    let a = net.predict_rows(&rows, 100).unwrap();
    let b = restored.predict_rows(&rows, 100).unwrap();
    for i in 0..3 {
        assert_eq!(a.displacement[i].to_bits(), b.displacement[i].to_bits());
        assert_eq!(a.sigma_diag[i].to_bits(), b.sigma_diag[i].to_bits());
    }

    // A checkpoint from a different architecture must be refused, by name.
    let mut other = GnioNet::new(NetConfig::tiny(), 0).unwrap();
    let err = other.load(&path).unwrap_err();
    assert!(matches!(err, NetworkError::CheckpointMismatch(_)));
}

#[test]
fn pipeline_is_yaw_invariant() {
    use crate::data::{synth_generate, window_stream, NoiseSpec, SegmentSpec, SynthSpec};
    let spec = SynthSpec {
        rate: 100,
        seed: 17,
        noise: NoiseSpec::noiseless(),
        segments: vec![
            SegmentSpec::ConstVel {
                velocity: [0.6, 0.0, 0.0],
                duration: 2.0,
            },
            SegmentSpec::ArcTurn {
                radius: 1.0,
                speed: 0.5,
                duration: 2.0,
                clockwise: false,
            },
        ],
    };
    let seq = synth_generate(&spec).unwrap();
    let delta = 1.3f64;
    let rot = crate::geometry::rot_z(delta);
    let rotated = crate::data::Sequence {
        rate: seq.rate,
        imu: seq.imu.clone(),
        gt: seq
            .gt
            .iter()
            .map(|p| crate::data::PoseSample {
                t: p.t,
                position: rot * p.position,
                orientation: crate::geometry::quat_z(delta) * p.orientation,
            })
            .collect(),
        bias_gt: seq.bias_gt,
    };
    let net = GnioNet::new(tiny4(), 4).unwrap();
    let wa = window_stream(&seq, 1.0, 0.5).unwrap();
    let wb = window_stream(&rotated, 1.0, 0.5).unwrap();
    for (a, b) in wa.iter().zip(&wb) {
        let pa = net.predict(a).unwrap();
        let pb = net.predict(b).unwrap();
        let rel = (pa.displacement - pb.displacement).norm()
            / pa.displacement.norm().max(1e-9);
        assert!(rel < 1e-6, "displacement relative difference {rel}");
        let rel_s = (pa.sigma_diag - pb.sigma_diag).norm() / pa.sigma_diag.norm();
        assert!(rel_s < 1e-6);
    }
}

#[test]
fn batch_of_identical_windows_matches_the_single_pass() {
    // When every window in the batch is the same, the joint statistics equal
    // each window's own statistics, so the batched training pass must agree
    // with the single-window one (up to summation order in the mean).
    let net = GnioNet::new(tiny4(), 19).unwrap();
    let rows = random_rows(40, 5);

    let mut single = Tape::new();
    let x = input_from_rows(&mut single, &rows, 40).unwrap();
    let staged = net.stage(&mut single, true);
    let ids = net.forward(&mut single, x, &staged, true).unwrap();
    let want_d = single.data(ids.displacement).to_vec();
    let want_u = single.data(ids.log_sigma).to_vec();

    let mut tape = Tape::new();
    let xs: Vec<_> = (0..3)
        .map(|_| input_from_rows(&mut tape, &rows, 40).unwrap())
        .collect();
    let staged = net.stage(&mut tape, true);
    let (batch, bn_nodes) = net.forward_batch(&mut tape, &xs, &staged, true).unwrap();
    assert_eq!(batch.len(), 3);
    assert_eq!(bn_nodes.len(), net.bn_layer_count());
    for ids in &batch {
        assert!(ids.bn_nodes.is_empty());
        for i in 0..3 {
            assert_relative_eq!(
                tape.data(ids.displacement)[i],
                want_d[i],
                max_relative = 1e-12,
                epsilon = 1e-12
            );
            assert_relative_eq!(
                tape.data(ids.log_sigma)[i],
                want_u[i],
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
    }
}

#[test]
fn batched_statistics_pool_across_windows() {
    // Two equal-length windows: the joint per-channel mean is the mean of the
    // window means, and the joint variance adds the spread between the means
    // to the mean of the window variances.
    let net = GnioNet::new(tiny4(), 23).unwrap();
    let rows_a = random_rows(40, 8);
    let rows_b: Vec<f64> = random_rows(40, 9).iter().map(|v| v * 1.7 + 0.3).collect();

    let stats_of = |rows: &[f64]| {
        let mut tape = Tape::new();
        let x = input_from_rows(&mut tape, rows, 40).unwrap();
        let staged = net.stage(&mut tape, true);
        let ids = net.forward(&mut tape, x, &staged, true).unwrap();
        let (m, v) = tape.batchnorm_stats(ids.bn_nodes[0]).unwrap();
        (m.to_vec(), v.to_vec())
    };
    let (ma, va) = stats_of(&rows_a);
    let (mb, vb) = stats_of(&rows_b);

    let mut tape = Tape::new();
    let xa = input_from_rows(&mut tape, &rows_a, 40).unwrap();
    let xb = input_from_rows(&mut tape, &rows_b, 40).unwrap();
    let staged = net.stage(&mut tape, true);
    let (_, bn_nodes) = net.forward_batch(&mut tape, &[xa, xb], &staged, true).unwrap();
    let (mj, vj) = tape.batchnorm_stats(bn_nodes[0]).unwrap();

    for ch in 0..ma.len() {
        let want_m = 0.5 * (ma[ch] + mb[ch]);
        let want_v = 0.5 * (va[ch] + vb[ch]) + (0.5 * (ma[ch] - mb[ch])).powi(2);
        assert_relative_eq!(mj[ch], want_m, epsilon = 1e-12);
        assert_relative_eq!(vj[ch], want_v, max_relative = 1e-12);
    }
}

#[test]
fn batched_gradients_match_central_differences() {
    // Finite differences through the exact graph training uses: a two-window
    // batch with shared normalization statistics.
    let rows_a = random_rows(20, 14);
    let rows_b = random_rows(20, 15);
    let layout: Vec<(String, usize)> = GnioNet::new(tiny4(), 21)
        .unwrap()
        .params
        .iter()
        .map(|p| (p.name.clone(), p.data.len()))
        .collect();

    let loss_of = |net: &GnioNet, tape: &mut Tape, want_grad: bool| {
        let xa = input_from_rows(tape, &rows_a, 20).unwrap();
        let xb = input_from_rows(tape, &rows_b, 20).unwrap();
        let staged = net.stage(tape, want_grad);
        let (batch, _) = net.forward_batch(tape, &[xa, xb], &staged, true).unwrap();
        let mut per = Vec::new();
        for ids in &batch {
            let d2 = tape.mul(ids.displacement, ids.displacement).unwrap();
            let a = tape.sum(d2);
            let b = tape.sum(ids.log_sigma);
            per.push(tape.add(a, b).unwrap());
        }
        let both = tape.add(per[0], per[1]).unwrap();
        (tape.sum(both), staged)
    };

    let f = |x: &[f64]| {
        let mut net = GnioNet::new(tiny4(), 21).unwrap();
        let mut off = 0;
        for (name, len) in &layout {
            net.set_param(name, x[off..off + len].to_vec()).unwrap();
            off += len;
        }
        let mut tape = Tape::new();
        let (loss, _) = loss_of(&net, &mut tape, false);
        tape.value(loss)
    };

    let net = GnioNet::new(tiny4(), 21).unwrap();
    let x0: Vec<f64> = net.params.iter().flat_map(|p| p.data.clone()).collect();
    let mut tape = Tape::new();
    let (loss, staged) = loss_of(&net, &mut tape, true);
    tape.backward(loss).unwrap();
    let mut analytic = Vec::with_capacity(x0.len());
    for (i, p) in net.params.iter().enumerate() {
        match tape.grad(staged.ids[i]) {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat(0.0).take(p.data.len())),
        }
    }
    let step = (x0.len() / 40).max(1);
    let indices: Vec<usize> = (0..x0.len()).step_by(step).collect();
    let report = crate::autodiff::gradient_check_at(&f, &analytic, &x0, &indices, 1e-5, 1e-4);
    assert!(report.passed(), "{report}");
}

#[test]
fn extreme_head_inputs_stay_finite() {
    // An undertrained network can feed enormous pre-activations into the
    // exponential branches; both the exp scale and log-σ are capped so the
    // outputs saturate instead of overflowing.
    let mut config = tiny4();
    config.scale_fn = ScaleFn::Exp;
    let mut net = GnioNet::new(config, 3).unwrap();
    net.set_param("head.scale.w", vec![1e9; 3 * 8]).unwrap();
    net.set_param("head.logvar.w", vec![-1e9; 3 * 8]).unwrap();
    let pred = net.predict_rows(&random_rows(40, 2), 40).unwrap();
    for i in 0..3 {
        assert!(pred.scale[i].is_finite(), "scale {} overflowed", pred.scale[i]);
        assert!(pred.scale[i] <= 30f64.exp() * (1.0 + 1e-12));
        assert!(pred.log_sigma[i].abs() <= 30.0 + 1e-12);
        assert!(pred.sigma_diag[i].is_finite());
        assert!(pred.displacement[i].is_finite());
    }

    // In the unsaturated range the caps are exact no-ops.
    let mut plain = GnioNet::new(tiny4(), 3).unwrap();
    plain.set_param("head.logvar.b", vec![0.25, -1.5, 3.0]).unwrap();
    plain.set_param("head.logvar.w", vec![0.0; 3 * 8]).unwrap();
    let p = plain.predict_rows(&random_rows(40, 2), 40).unwrap();
    assert_eq!(p.log_sigma, Vector3::new(0.25, -1.5, 3.0));
}
