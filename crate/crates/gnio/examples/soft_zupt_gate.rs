//! Watch the learned gate close on stationary windows (soft ZUPT).
//!
//! The prediction head multiplies its displacement by a gate vector. Training
//! on data with long rest periods drives the gate toward zero whenever the
//! IMU shows no motion, which suppresses spurious displacement without a
//! hand-tuned zero-velocity detector. Run with:
//!
//! ```text
//! cargo run --release --example soft_zupt_gate
//! ```

use gnio::data::{synth_generate, window_stream, Axis, NoiseSpec, SegmentSpec, SynthSpec};
use gnio::network::{GnioNet, NetConfig};
use gnio::training::{dataset_gate_stats, train, GateStats, ScheduleSpec, TrainConfig};

fn print_stats(tag: &str, s: &GateStats) {
    println!(
        "{tag:<10} stationary ({} windows): mean |g| {:.4}, mean dhat {:.5} m",
        s.n_stationary, s.gate_abs_stationary, s.disp_norm_stationary
    );
    println!(
        "{tag:<10} moving     ({} windows): mean |g| {:.4}, mean dhat {:.5} m",
        s.n_moving, s.gate_abs_moving, s.disp_norm_moving
    );
}

fn spec(seed: u64) -> SynthSpec {
    // Half rest, half motion, with sensor noise so rest is not literally zero.
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
            SegmentSpec::Stationary { duration: 8.0 },
            SegmentSpec::ConstVel {
                velocity: [0.5, 0.0, 0.0],
                duration: 8.0,
            },
            SegmentSpec::Stationary { duration: 8.0 },
            SegmentSpec::Sinusoid {
                axis: Axis::X,
                amplitude: 0.4,
                frequency: 0.5,
                duration: 8.0,
            },
            SegmentSpec::Stationary { duration: 8.0 },
        ],
    }
}

fn main() {
    let windows: Vec<_> = [5u64, 6]
        .iter()
        .flat_map(|&s| {
            let seq = synth_generate(&spec(s)).expect("valid spec");
            window_stream(&seq, 1.0, 0.5).expect("valid windowing")
        })
        .collect();

    // The small preset keeps this example quick; the mechanism is identical
    // at full scale.
    let mut net = GnioNet::new(NetConfig::tiny(), 11).expect("valid config");

    let before = dataset_gate_stats(&net, &windows).expect("windows nonempty");
    println!("before training:");
    print_stats("", &before);

    let train_config = TrainConfig {
        seed: 11,
        batch: 16,
        epochs: 40,
        schedule: ScheduleSpec {
            lr_peak: 5e-4,
            warmup_epochs: 4.0,
            total_epochs: 40.0,
            ..ScheduleSpec::default()
        },
        ..TrainConfig::default()
    };
    train(&mut net, &windows, &train_config, 0, |log, _| {
        if log.epoch % 5 == 0 || log.epoch + 1 == train_config.epochs {
            println!("epoch {:>2}: loss {:.4}", log.epoch, log.loss_total);
        }
        Ok(())
    })
    .expect("training converges");

    let after = dataset_gate_stats(&net, &windows).expect("windows nonempty");
    println!("after {} epochs:", train_config.epochs);
    print_stats("", &after);

    println!(
        "gate ratio stationary/moving: {:.3} (before) -> {:.3} (after)",
        before.gate_abs_stationary / before.gate_abs_moving,
        after.gate_abs_stationary / after.gate_abs_moving
    );
    println!(
        "displacement ratio stationary/moving: {:.3} (before) -> {:.3} (after)",
        before.disp_norm_stationary / before.disp_norm_moving,
        after.disp_norm_stationary / after.disp_norm_moving
    );
}
