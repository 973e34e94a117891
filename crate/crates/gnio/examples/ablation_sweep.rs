//! Sweep gate and scale activations under an identical training budget.
//!
//! Trains one shrunken network per (gate, scale) pair with the same seed,
//! data, and epoch budget, then reports held-out window MSE and the fused
//! trajectory error for each. The same sweep, and a bank-size sweep over
//! m = 16/32/64/128, is available from the CLI:
//!
//! ```text
//! gnio ablate --axis gating    --data <dir> --out <dir>
//! gnio ablate --axis bank_size --data <dir> --out <dir>
//! cargo run --release --example ablation_sweep
//! ```

use gnio::data::{synth_generate, window_stream, Axis, NoiseSpec, SegmentSpec, SynthSpec, Window};
use gnio::ekf::{run_filter, FilterConfig, NetSource};
use gnio::eval::{evaluate, Alignment, Trajectory};
use gnio::network::{GateFn, GnioNet, NetConfig, ScaleFn};
use gnio::training::{dataset_mse, train, ScheduleSpec, TrainConfig};

fn spec(seed: u64) -> SynthSpec {
    SynthSpec {
        rate: 100,
        seed,
        noise: NoiseSpec {
            sigma_g: 1e-3,
            sigma_a: 1e-2,
            bg: [0.0; 3],
            ba: [0.0; 3],
        },
        segments: vec![
            SegmentSpec::Stationary { duration: 2.0 },
            SegmentSpec::ConstVel {
                velocity: [0.5, 0.2, 0.0],
                duration: 6.0,
            },
            SegmentSpec::Sinusoid {
                axis: Axis::X,
                amplitude: 0.4,
                frequency: 0.6,
                duration: 5.0,
            },
            SegmentSpec::ArcTurn {
                radius: 1.5,
                speed: 0.6,
                duration: 6.0,
                clockwise: false,
            },
            SegmentSpec::Stationary { duration: 2.0 },
        ],
    }
}

fn main() {
    let train_windows: Vec<Window> = [1, 2]
        .iter()
        .map(|&s| synth_generate(&spec(s)).expect("valid spec"))
        .flat_map(|seq| window_stream(&seq, 1.0, 0.5).expect("valid windowing"))
        .collect();
    let holdout = synth_generate(&spec(42)).expect("valid spec");
    let holdout_windows = window_stream(&holdout, 1.0, 0.5).expect("valid windowing");

    let grid = [
        (GateFn::Sigmoid, ScaleFn::Linear),
        (GateFn::Tanh, ScaleFn::Linear),
        (GateFn::Tanh, ScaleFn::Exp),
        (GateFn::Tanh, ScaleFn::Abs),
        (GateFn::Tanh, ScaleFn::PosElu),
        (GateFn::Tanh, ScaleFn::Softplus),
    ];

    let filter = FilterConfig {
        update_stride: 0.5,
        ..FilterConfig::default()
    };
    let budget = TrainConfig {
        seed: 7,
        batch: 16,
        epochs: 12,
        schedule: ScheduleSpec {
            lr_peak: 5e-4,
            warmup_epochs: 2.0,
            total_epochs: 12.0,
            ..ScheduleSpec::default()
        },
        ..TrainConfig::default()
    };

    println!("{:<18} {:>8} {:>12} {:>10}", "config", "params", "holdout mse", "ate_m");
    for (gate_fn, scale_fn) in grid {
        let config = NetConfig {
            d: 16,
            m: 4,
            heads: 2,
            channels: [4, 8, 8, 16],
            gate_fn,
            scale_fn,
        };
        let mut net = GnioNet::new(config, budget.seed).expect("valid config");
        train(&mut net, &train_windows, &budget, 0, |_, _| Ok(())).expect("training succeeds");
        let mse = dataset_mse(&net, &holdout_windows).expect("predictions succeed");

        let mut source = NetSource::new(&net);
        let out = run_filter(&holdout, &mut source, &filter).expect("filter runs");
        let est = Trajectory::new(out.estimate).expect("nonempty estimate");
        let truth = Trajectory::new(holdout.gt.clone()).expect("nonempty ground truth");
        let result = evaluate(&est, &truth, Alignment::FirstPose, "ablation_sweep")
            .expect("overlap");

        let label = format!("{gate_fn:?}/{scale_fn:?}").to_lowercase();
        println!(
            "{:<18} {:>8} {:>12.5} {:>10.4}",
            label,
            net.param_count(),
            mse,
            result.report.ate_m
        );
    }
    println!("\nsame seed, data, and epoch budget for every row; rerunning");
    println!("reproduces the table exactly.");
}
