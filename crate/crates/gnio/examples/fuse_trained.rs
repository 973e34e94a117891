//! Train a small network, then fuse its displacement predictions.
//!
//! The full loop in one file: generate training sequences, train a tiny
//! network for a few epochs, then run the error-state filter on a held-out
//! sequence using the network as the measurement source, against a
//! dead-reckoning baseline. Artifacts land in `example_out/fuse_trained`.
//!
//! ```text
//! cargo run --release --example fuse_trained
//! ```

use gnio::data::{synth_generate, window_stream, Axis, NoiseSpec, SegmentSpec, Sequence, SynthSpec, Window};
use gnio::ekf::{run_filter, FilterConfig, NetSource, NoSource};
use gnio::eval::{emit_outputs, evaluate, Alignment, Trajectory};
use gnio::network::{GnioNet, NetConfig};
use gnio::training::{dataset_mse, train, ScheduleSpec, TrainConfig};

fn spec(seed: u64, repeats: usize) -> SynthSpec {
    let block = vec![
        SegmentSpec::Stationary { duration: 3.0 },
        SegmentSpec::ConstVel {
            velocity: [0.6, 0.1, 0.0],
            duration: 8.0,
        },
        SegmentSpec::Sinusoid {
            axis: Axis::X,
            amplitude: 0.5,
            frequency: 0.6,
            duration: 8.0,
        },
        SegmentSpec::ArcTurn {
            radius: 2.0,
            speed: 0.8,
            duration: 8.0,
            clockwise: seed % 2 == 0,
        },
        SegmentSpec::Stationary { duration: 3.0 },
    ];
    SynthSpec {
        rate: 100,
        seed,
        noise: NoiseSpec {
            sigma_g: 1e-3,
            sigma_a: 1e-2,
            bg: [0.0; 3],
            ba: [0.0; 3],
        },
        segments: block
            .iter()
            .cycle()
            .take(block.len() * repeats)
            .cloned()
            .collect(),
    }
}

fn windows_of(seq: &Sequence) -> Vec<Window> {
    window_stream(seq, 1.0, 0.5).expect("valid windowing")
}

fn main() {
    let train_windows: Vec<Window> = [1u64, 2, 3]
        .iter()
        .flat_map(|&s| {
            let seq = synth_generate(&spec(s, 2)).expect("valid spec");
            windows_of(&seq)
        })
        .collect();
    // A three-block holdout: long enough for dead reckoning to drift visibly.
    let holdout = synth_generate(&spec(99, 3)).expect("valid spec");
    println!("training on {} windows from 3 sequences", train_windows.len());

    let mut net = GnioNet::new(NetConfig::tiny(), 7).expect("valid config");
    let holdout_windows = windows_of(&holdout);
    let before = dataset_mse(&net, &holdout_windows).expect("predictions succeed");

    let config = TrainConfig {
        seed: 7,
        batch: 32,
        epochs: 15,
        schedule: ScheduleSpec {
            lr_peak: 5e-4,
            warmup_epochs: 2.0,
            total_epochs: 15.0,
            ..ScheduleSpec::default()
        },
        ..TrainConfig::default()
    };
    train(&mut net, &train_windows, &config, 0, |log, _| {
        println!(
            "epoch {:>2}  lr {:.2e}  loss {:.4}",
            log.epoch, log.lr, log.loss_total
        );
        Ok(())
    })
    .expect("training succeeds");

    let after = dataset_mse(&net, &holdout_windows).expect("predictions succeed");
    println!(
        "\nheld-out window MSE: {before:.5} untrained, {after:.5} trained ({:.0}% of untrained)",
        100.0 * after / before
    );

    // Fuse on the held-out sequence: network measurements vs none at all.
    let filter = FilterConfig {
        update_stride: 0.5,
        ..FilterConfig::default()
    };
    let mut source = NetSource::new(&net);
    let fused = run_filter(&holdout, &mut source, &filter).expect("filter runs");
    let dead = run_filter(&holdout, &mut NoSource, &filter).expect("filter runs");

    let truth = Trajectory::new(holdout.gt.clone()).expect("nonempty ground truth");
    let fused_est = Trajectory::new(fused.estimate).expect("nonempty estimate");
    let dead_est = Trajectory::new(dead.estimate).expect("nonempty estimate");
    let fused_eval =
        evaluate(&fused_est, &truth, Alignment::FirstPose, "fuse_trained").expect("overlap");
    let dead_eval =
        evaluate(&dead_est, &truth, Alignment::FirstPose, "fuse_trained").expect("overlap");
    let accepted = fused.updates.iter().filter(|u| u.accepted).count();
    println!(
        "fused ATE {:.4} m ({accepted}/{} updates accepted); dead reckoning {:.4} m",
        fused_eval.report.ate_m,
        fused.updates.len(),
        dead_eval.report.ate_m
    );

    let dir = std::path::Path::new("example_out/fuse_trained");
    let written = emit_outputs(
        &fused_eval.report,
        &[
            ("ground truth".into(), fused_eval.ground_truth),
            ("network fusion".into(), fused_eval.estimate),
            ("dead reckoning".into(), dead_eval.estimate),
        ],
        dir,
    )
    .expect("artifacts written");
    println!("wrote {} artifacts to {}", written.len(), dir.display());
}
