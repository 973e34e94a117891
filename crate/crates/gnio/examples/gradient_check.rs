//! Verify reverse-mode gradients against central finite differences.
//!
//! Builds `loss = mean(tanh(W x + b)²)` on the tape, backpropagates, and
//! compares the analytic gradient of every input coordinate with a numeric
//! estimate. The same machinery validates each network primitive in the test
//! suite. Run with:
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use gnio::autodiff::{gradient_check, Tape};

const W_LEN: usize = 12; // 3x4
const B_LEN: usize = 3;
const X_LEN: usize = 4;

/// Evaluate the loss at a packed parameter vector [W, b, x]; optionally
/// return the analytic gradient in the same packing.
fn eval(theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let w = tape
        .leaf(&[3, 4], theta[..W_LEN].to_vec(), true)
        .expect("shape matches data");
    let b = tape
        .leaf(&[3], theta[W_LEN..W_LEN + B_LEN].to_vec(), true)
        .expect("shape matches data");
    let x = tape
        .leaf(&[4], theta[W_LEN + B_LEN..].to_vec(), true)
        .expect("shape matches data");

    let pre = tape.affine(w, x, b).expect("shapes agree");
    let act = tape.tanh(pre);
    let sq = tape.mul(act, act).expect("same shape");
    let loss = tape.mean(sq);

    let mut grad = Vec::new();
    if want_grad {
        tape.backward(loss).expect("loss is scalar");
        for id in [w, b, x] {
            grad.extend_from_slice(tape.grad(id).expect("leaf requested gradients"));
        }
    }
    (tape.value(loss), grad)
}

fn main() {
    // A deterministic, non-symmetric evaluation point.
    let theta: Vec<f64> = (0..W_LEN + B_LEN + X_LEN)
        .map(|i| 0.7 * ((i as f64) * 0.9).sin() + 0.1)
        .collect();

    let (loss, analytic) = eval(&theta, true);
    println!("loss at the checkpoint: {loss:.6}");

    let f = |t: &[f64]| eval(t, false).0;
    let report = gradient_check(&f, &analytic, &theta, 1e-6, 1e-8);
    println!("{report}");
    assert!(report.passed(), "analytic and numeric gradients disagree");
    println!(
        "all {} coordinates match central differences",
        theta.len()
    );
}
