//! Inspect the motion-bank attention for contrasting motion regimes.
//!
//! The encoder feature queries a small bank of learned motion prototypes via
//! scaled dot-product attention; the attended summary augments the feature
//! before the prediction head. This example prints the per-head attention
//! distribution for a stationary window and an oscillating window. Run with:
//!
//! ```text
//! cargo run --release --example motion_bank_attention
//! ```

use gnio::data::{synth_generate, window_stream, Axis, NoiseSpec, SegmentSpec, SynthSpec, Window};
use gnio::network::{GnioNet, NetConfig};

fn pick_window(seq_spec: SynthSpec, stationary: bool) -> Window {
    let seq = synth_generate(&seq_spec).expect("valid spec");
    let windows = window_stream(&seq, 1.0, 0.5).expect("valid windowing");
    windows
        .into_iter()
        .find(|w| w.is_stationary(0.01) == stationary)
        .expect("such a window exists")
}

fn show(net: &GnioNet, label: &str, window: &Window) {
    let pred = net.predict(window).expect("window matches the architecture");
    println!("{label}:");
    for (h, weights) in pred.attention.iter().enumerate() {
        let sum: f64 = weights.iter().sum();
        let bars: Vec<String> = weights
            .iter()
            .map(|w| format!("{:<10}", "#".repeat((w * 10.0).round() as usize)))
            .collect();
        println!(
            "  head {h}: [{}] sum {:.9}",
            bars.join(" "),
            sum
        );
        let weights_str: Vec<String> = weights.iter().map(|w| format!("{w:.3}")).collect();
        println!("          {}", weights_str.join("  "));
    }
    println!(
        "  gated displacement ({:+.4}, {:+.4}, {:+.4}) m",
        pred.displacement.x, pred.displacement.y, pred.displacement.z
    );
}

fn main() {
    let base = SynthSpec {
        rate: 100,
        seed: 3,
        noise: NoiseSpec {
            sigma_g: 5e-4,
            sigma_a: 5e-3,
            bg: [0.0; 3],
            ba: [0.0; 3],
        },
        segments: vec![
            SegmentSpec::Stationary { duration: 4.0 },
            SegmentSpec::Sinusoid {
                axis: Axis::X,
                amplitude: 0.6,
                frequency: 0.8,
                duration: 6.0,
            },
            SegmentSpec::Stationary { duration: 2.0 },
        ],
    };

    // m = 6 prototypes, two heads: small enough to print, big enough to show
    // the distributions differ across inputs.
    let config = NetConfig {
        d: 16,
        m: 6,
        heads: 2,
        channels: [4, 8, 8, 16],
        ..NetConfig::tiny()
    };
    let net = GnioNet::new(config, 17).expect("valid config");
    println!("untrained network, m = 6 prototypes, 2 heads\n");

    let still = pick_window(base.clone(), true);
    let moving = pick_window(base, false);
    show(&net, "stationary window", &still);
    println!();
    show(&net, "oscillating window", &moving);
    println!();
    println!("each head's weights form a probability distribution (sum = 1);");
    println!("training sharpens which prototypes a motion regime recruits.");
}
