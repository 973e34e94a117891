//! Train the tiny configuration for a few epochs and watch the loss drop.
//!
//! Synthesizes a couple of minutes of varied motion, windows it, trains the
//! tiny network, and reports the window MSE on held-out data before and
//! after. Takes a few minutes on one core. Run with:
//!
//! ```text
//! cargo run --release --example train_tiny
//! ```

use gnio::data::{synth_generate, window_stream, Axis, NoiseSpec, SegmentSpec, SynthSpec, Window};
use gnio::network::{GnioNet, NetConfig};
use gnio::training::{dataset_mse, train, ScheduleSpec, TrainConfig};

fn walk_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        rate: 100,
        seed,
        noise: NoiseSpec {
            sigma_g: 5e-4,
            sigma_a: 5e-3,
            bg: [0.0; 3],
            ba: [0.0; 3],
        },
        segments: vec![
            SegmentSpec::Stationary { duration: 3.0 },
            SegmentSpec::ConstVel {
                velocity: [0.5, 0.1, 0.0],
                duration: 8.0,
            },
            SegmentSpec::Sinusoid {
                axis: Axis::Y,
                amplitude: 0.4,
                frequency: 0.5,
                duration: 6.0,
            },
            SegmentSpec::ArcTurn {
                radius: 1.5,
                speed: 0.6,
                duration: 8.0,
                clockwise: seed % 2 == 0,
            },
            SegmentSpec::Stationary { duration: 3.0 },
        ],
    }
}

fn windows_for(seeds: &[u64]) -> Vec<Window> {
    let mut out = Vec::new();
    for &seed in seeds {
        let seq = synth_generate(&walk_spec(seed)).expect("valid spec");
        out.extend(window_stream(&seq, 1.0, 0.5).expect("valid windowing"));
    }
    out
}

fn main() {
    let train_set = windows_for(&[1, 2, 3]);
    let holdout = windows_for(&[99]);
    println!(
        "{} training windows, {} held out",
        train_set.len(),
        holdout.len()
    );

    let mut net = GnioNet::new(NetConfig::tiny(), 7).expect("valid config");
    println!("tiny network: {} parameters", net.param_count());
    let before = dataset_mse(&net, &holdout).expect("holdout nonempty");

    let config = TrainConfig {
        seed: 7,
        batch: 16,
        epochs: 5,
        schedule: ScheduleSpec {
            warmup_epochs: 1.0,
            total_epochs: 5.0,
            ..ScheduleSpec::default()
        },
        ..TrainConfig::default()
    };
    train(&mut net, &train_set, &config, 0, |log, _| {
        println!(
            "epoch {}: lr {:.2e}, loss {:.4} (mse {:.4}, nll {:.4})",
            log.epoch, log.lr, log.loss_total, log.loss_mse, log.loss_nll
        );
        Ok(())
    })
    .expect("training converges");

    let after = dataset_mse(&net, &holdout).expect("holdout nonempty");
    println!("holdout window MSE: {before:.5} untrained -> {after:.5} trained");
    println!(
        "({:.2}% of the untrained error)",
        100.0 * after / before
    );
}
