//! Plot the warmup + cosine learning-rate schedule in the terminal.
//!
//! The default schedule ramps linearly from 1e-6 to 1e-4 over the first five
//! epochs, then follows a cosine down to the 1e-6 floor at epoch 200. Run
//! with:
//!
//! ```text
//! cargo run --release --example lr_schedule
//! ```

use gnio::training::{lr_at, ScheduleSpec};

fn main() {
    let spec = ScheduleSpec::default();
    println!(
        "warmup {} epochs to peak {:.0e}, cosine to {:.0e} at epoch {}",
        spec.warmup_epochs, spec.lr_peak, spec.lr_min, spec.total_epochs
    );
    println!();

    let cols = 56usize;
    for i in 0..=40 {
        let epoch = spec.total_epochs * i as f64 / 40.0;
        let lr = lr_at(epoch, &spec).expect("epoch within schedule");
        let bar = "#".repeat(((lr / spec.lr_peak) * cols as f64).round().max(1.0) as usize);
        println!("{epoch:6.1} | {bar:<cols$} {lr:10.3e}");
    }
    println!();

    // The three anchors are exact, not approximate.
    for (epoch, expect) in [(0.0, 1e-6), (5.0, 1e-4), (200.0, 1e-6)] {
        let lr = lr_at(epoch, &spec).unwrap();
        assert_eq!(lr, expect, "anchor at epoch {epoch}");
        println!("lr({epoch:5.1}) = {lr:.6e} (exact)");
    }
    let mid = lr_at(102.5, &spec).unwrap();
    println!("lr(102.5) = {mid:.6e} (cosine midpoint: (peak + floor) / 2)");
}
