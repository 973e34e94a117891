//! Generate a synthetic IMU sequence with ground truth and save it as CSVs.
//!
//! The generator builds piecewise motion (rest, straight lines, oscillation,
//! arc turns), integrates exact kinematics, and emits gyro/accel samples with
//! configurable white noise and constant biases. Run with:
//!
//! ```text
//! cargo run --release --example synth_dataset
//! ```

use std::path::Path;

use gnio::data::{
    save_sequence, synth_generate, window_stream, Axis, NoiseSpec, SegmentSpec, SynthSpec,
};

fn main() {
    let spec = SynthSpec {
        rate: 200,
        seed: 42,
        noise: NoiseSpec {
            sigma_g: 1e-3,
            sigma_a: 1e-2,
            bg: [2e-4, -1e-4, 1e-4],
            ba: [5e-3, -3e-3, 2e-3],
        },
        segments: vec![
            SegmentSpec::Stationary { duration: 4.0 },
            SegmentSpec::ConstVel {
                velocity: [0.6, 0.2, 0.0],
                duration: 10.0,
            },
            SegmentSpec::Sinusoid {
                axis: Axis::X,
                amplitude: 0.5,
                frequency: 0.5,
                duration: 8.0,
            },
            SegmentSpec::ArcTurn {
                radius: 2.0,
                speed: 0.8,
                duration: 12.0,
                clockwise: false,
            },
            SegmentSpec::Stationary { duration: 4.0 },
        ],
    };

    let seq = synth_generate(&spec).expect("spec is valid");
    let duration = seq.imu.len() as f64 / seq.rate;
    println!(
        "generated {} samples at {} Hz ({duration:.1} s)",
        seq.imu.len(),
        spec.rate
    );

    let first = seq.gt.first().unwrap().position;
    let last = seq.gt.last().unwrap().position;
    let net_disp = last - first;
    println!(
        "net displacement ({:.2}, {:.2}, {:.2}) m over {} ground-truth poses",
        net_disp.x,
        net_disp.y,
        net_disp.z,
        seq.gt.len()
    );

    // During the initial rest the accelerometer reads the gravity reaction.
    let rest = 4.0 * seq.rate;
    let samples = &seq.imu[..rest as usize];
    let mean_az = samples.iter().map(|s| s.accel.z).sum::<f64>() / samples.len() as f64;
    println!("mean accel z while stationary: {mean_az:.3} m/s² (gravity reaction + bias)");

    let windows = window_stream(&seq, 1.0, 0.5).expect("rate divides window and stride");
    let stationary = windows.iter().filter(|w| w.is_stationary(0.01)).count();
    println!(
        "{} windows of 1.0 s at 0.5 s stride; {stationary} stationary, {} moving",
        windows.len(),
        windows.len() - stationary
    );

    let dir = Path::new("example_out/synth_dataset");
    save_sequence(dir, &seq).expect("write CSVs");
    println!("wrote imu.csv, gt.csv, meta.json to {}", dir.display());
}
