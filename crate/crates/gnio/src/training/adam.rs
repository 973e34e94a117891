//! Adam with bias correction.

use crate::network::ParamSet;

/// First/second moment accumulators aligned with a [`ParamSet`].
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g², then the
    /// bias-corrected step p ← p − lr·m̂/(√v̂ + ε).
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>], lr: f64) {
        assert_eq!(grads.len(), params.len(), "gradient/parameter count");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, g) in grads.iter().enumerate() {
            let p = params.get_mut(idx);
            assert_eq!(g.len(), p.data.len(), "gradient shape for {}", p.name);
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Scale all gradients so their global Euclidean norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: Vec<f64>) -> ParamSet {
        let mut set = ParamSet::default();
        set.push("x", vec![value.len()], value);
        set
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = one_param(vec![1.0, -2.0, 3.5]);
        let before = params.get(0).data.clone();
        let mut adam = AdamState::new(&params);
        for _ in 0..10 {
            adam.step(&mut params, &[vec![0.0; 3]], 0.1);
        }
        for (a, b) in params.get(0).data.iter().zip(&before) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn first_step_moves_by_about_the_learning_rate() {
        // Bias correction makes m̂ = g and v̂ = g² on step one, so the update
        // magnitude is lr·|g|/(|g| + ε) ≈ lr regardless of gradient scale.
        for &g in &[1e-4, 0.3, 7.0] {
            let mut params = one_param(vec![0.0]);
            let mut adam = AdamState::new(&params);
            adam.step(&mut params, &[vec![g]], 0.01);
            let moved = params.get(0).data[0].abs();
            assert!((moved - 0.01).abs() < 1e-5, "step {moved} for grad {g}");
            assert!(params.get(0).data[0] < 0.0, "moves against the gradient");
        }
    }

    #[test]
    fn adam_minimizes_a_scalar_quadratic() {
        let mut params = one_param(vec![1.0]);
        let mut adam = AdamState::new(&params);
        for _ in 0..100 {
            let x = params.get(0).data[0];
            adam.step(&mut params, &[vec![2.0 * x]], 0.1);
        }
        let x = params.get(0).data[0];
        assert!(x.abs() < 0.05, "x = {x} after 100 steps");
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut grads = vec![vec![3.0, 0.0], vec![4.0]];
        let pre = clip_global_norm(&mut grads, 1.0);
        assert_eq!(pre, 5.0);
        let post: f64 = grads
            .iter()
            .flat_map(|g| g.iter().map(|x| x * x))
            .sum::<f64>()
            .sqrt();
        assert!((post - 1.0).abs() < 1e-12);
        // Direction preserved.
        assert!((grads[0][0] / grads[1][0] - 0.75).abs() < 1e-12);

        let mut small = vec![vec![0.1, 0.2]];
        let before = small.clone();
        clip_global_norm(&mut small, 10.0);
        assert_eq!(small, before);
    }
}
