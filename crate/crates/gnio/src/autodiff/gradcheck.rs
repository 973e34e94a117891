//! Central-difference verification of analytic gradients.
//!
//! The finite-difference quotient is the oracle: any backward implementation must
//! reproduce it to the requested relative tolerance. Relative error uses an
//! absolute floor so that near-zero derivatives are not swamped by the roundoff
//! noise inherent in the difference quotient itself.

use std::fmt;

/// Floor for the relative-error denominator. Derivatives smaller than this are
/// compared absolutely against `floor * tol`.
const REL_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Number of coordinates checked.
    pub n: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    /// Coordinate (index into the flattened input) with the worst error.
    pub worst_index: usize,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_pair: (f64, f64),
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} coords, max rel err {:.3e} (tol {:.1e}) at index {} (analytic {:.6e}, numeric {:.6e}), mean {:.3e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.n,
            self.max_rel_err,
            self.tol,
            self.worst_index,
            self.worst_pair.0,
            self.worst_pair.1,
            self.mean_rel_err,
        )
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare `analytic` against central differences of `f` at `x`, for every coordinate.
pub fn gradient_check(
    f: &dyn Fn(&[f64]) -> f64,
    analytic: &[f64],
    x: &[f64],
    h: f64,
    tol: f64,
) -> GradCheckReport {
    let all: Vec<usize> = (0..x.len()).collect();
    gradient_check_at(f, analytic, x, &all, h, tol)
}

/// Compare `analytic` against central differences of `f` at `x`, for the listed
/// coordinates only. Useful when a full sweep over every parameter is too slow.
pub fn gradient_check_at(
    f: &dyn Fn(&[f64]) -> f64,
    analytic: &[f64],
    x: &[f64],
    indices: &[usize],
    h: f64,
    tol: f64,
) -> GradCheckReport {
    assert_eq!(
        analytic.len(),
        x.len(),
        "analytic gradient length must match input length"
    );
    assert!(!indices.is_empty(), "no coordinates to check");
    let mut xp = x.to_vec();
    let mut max_rel = 0.0;
    let mut sum_rel = 0.0;
    let mut worst = indices[0];
    let mut worst_pair = (0.0, 0.0);
    for &i in indices {
        let x0 = xp[i];
        xp[i] = x0 + h;
        let fp = f(&xp);
        xp[i] = x0 - h;
        let fm = f(&xp);
        xp[i] = x0;
        let numeric = (fp - fm) / (2.0 * h);
        let e = rel_err(analytic[i], numeric);
        sum_rel += e;
        if e > max_rel {
            max_rel = e;
            worst = i;
            worst_pair = (analytic[i], numeric);
        }
    }
    GradCheckReport {
        n: indices.len(),
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / indices.len() as f64,
        worst_index: worst,
        worst_pair,
        tol,
    }
}
