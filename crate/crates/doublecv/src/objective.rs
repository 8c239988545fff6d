//! Objective functions f(x) over binary (or relaxed real) inputs, together
//! with the gradients the estimators consume.
//!
//! Every objective reports, from one evaluation: the value f(x), the input
//! gradient grad_x f(x) of the natural real-valued extension, and the gradient
//! with respect to any trainable parameters theta. Objectives with no
//! parameters return an empty theta gradient.

use crate::math::dot;

/// Result of one objective evaluation at a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    /// f(x).
    pub value: f64,
    /// grad_x f(x), one entry per input coordinate.
    pub input_grad: Vec<f64>,
    /// grad_theta f(x) as a flat vector; empty when f has no parameters.
    pub theta_grad: Vec<f64>,
}

/// An objective over D-dimensional inputs. Implementations must accept any
/// real-valued x of the right dimension, so that control variates can be
/// anchored at the distribution mean.
pub trait Objective {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> ObjectiveEval;
}

/// Evaluate an objective at the mean vector mu. This is definitionally the
/// same code path as any other evaluation; the named entry point documents
/// that mean-anchored baselines use the relaxed objective.
pub fn eval_at_mean(objective: &dyn Objective, mu: &[f64]) -> ObjectiveEval {
    assert_eq!(objective.dim(), mu.len(), "eval_at_mean: dimension mismatch");
    objective.eval(mu)
}

/// The scaled quadratic f(x) = (1/D) sum_i (x_i - target)^2. On binary inputs
/// this is affine in x, which makes it a sharp test bed for gradient-based
/// control variates; the 1/D factor keeps values comparable across dimensions.
#[derive(Debug, Clone)]
pub struct ToyQuadratic {
    dim: usize,
    target: f64,
}

impl ToyQuadratic {
    pub fn new(dim: usize, target: f64) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        assert!(target.is_finite());
        Self { dim, target }
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Closed-form E_q[f] under coordinatewise Bernoulli(mu) inputs:
    /// (1/D) sum_i [mu_i (1 - target)^2 + (1 - mu_i) target^2].
    pub fn exact_mean(&self, mu: &[f64]) -> f64 {
        assert_eq!(mu.len(), self.dim);
        let (a, b) = ((1.0 - self.target).powi(2), self.target.powi(2));
        mu.iter().map(|&m| m * a + (1.0 - m) * b).sum::<f64>() / self.dim as f64
    }

    /// Closed-form grad_eta E_q[f]: per coordinate
    /// mu_i (1 - mu_i) (1 - 2 target) / D.
    pub fn exact_logit_grad(&self, mu: &[f64]) -> Vec<f64> {
        assert_eq!(mu.len(), self.dim);
        let c = (1.0 - 2.0 * self.target) / self.dim as f64;
        mu.iter().map(|&m| m * (1.0 - m) * c).collect()
    }
}

impl Objective for ToyQuadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> ObjectiveEval {
        assert_eq!(x.len(), self.dim, "ToyQuadratic::eval: dimension mismatch");
        let inv_d = 1.0 / self.dim as f64;
        let value = x.iter().map(|&xi| (xi - self.target).powi(2)).sum::<f64>() * inv_d;
        let input_grad = x.iter().map(|&xi| 2.0 * (xi - self.target) * inv_d).collect();
        ObjectiveEval { value, input_grad, theta_grad: Vec::new() }
    }
}

/// The affine objective f(x) = coeffs . x + offset. A first-order surrogate is
/// exact for it, so mean-anchored control variates drive the estimator
/// variance to zero at unit strength; tests lean on that heavily.
#[derive(Debug, Clone)]
pub struct Linear {
    coeffs: Vec<f64>,
    offset: f64,
}

impl Linear {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> Self {
        assert!(!coeffs.is_empty(), "dimension must be at least 1");
        Self { coeffs, offset }
    }
}

impl Objective for Linear {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn eval(&self, x: &[f64]) -> ObjectiveEval {
        assert_eq!(x.len(), self.coeffs.len(), "Linear::eval: dimension mismatch");
        ObjectiveEval {
            value: dot(&self.coeffs, x) + self.offset,
            input_grad: self.coeffs.clone(),
            theta_grad: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TARGET: f64 = 0.499;

    #[test]
    fn toy_values_at_binary_points() {
        let f = ToyQuadratic::new(1, TARGET);
        assert!((f.eval(&[1.0]).value - 0.251001).abs() < 1e-12);
        assert!((f.eval(&[0.0]).value - 0.249001).abs() < 1e-12);
    }

    #[test]
    fn toy_scales_by_dimension() {
        let f1 = ToyQuadratic::new(1, TARGET);
        let f4 = ToyQuadratic::new(4, TARGET);
        let v4 = f4.eval(&[1.0, 0.0, 1.0, 0.0]).value;
        let expected = (2.0 * 0.251001 + 2.0 * 0.249001) / 4.0;
        assert!((v4 - expected).abs() < 1e-12);
        // Gradient picks up the same 1/D factor.
        assert!((f4.eval(&[1.0; 4]).input_grad[0] - f1.eval(&[1.0]).input_grad[0] / 4.0).abs() < 1e-15);
    }

    #[test]
    fn toy_relaxed_minimum_at_target() {
        let f = ToyQuadratic::new(2, TARGET);
        let at_target = f.eval(&[TARGET, TARGET]);
        assert!(at_target.value.abs() < 1e-15);
        assert!(at_target.input_grad.iter().all(|g| g.abs() < 1e-15));
        // eval at the mean vector is the same code path, bit for bit.
        let mu = [0.5, 0.5];
        let via_named = eval_at_mean(&f, &mu);
        assert_eq!(via_named, f.eval(&mu));
        assert!((via_named.value - 2.0 * (0.5 - TARGET).powi(2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn toy_exact_moments_match_enumeration() {
        let f = ToyQuadratic::new(1, TARGET);
        let mu = [0.5];
        // E f at eta = 0: average of the two binary values.
        assert!((f.exact_mean(&mu) - 0.250001).abs() < 1e-12);
        // d E f / d eta = mu (1 - mu) (1 - 2 target) = 0.25 * 0.002.
        assert!((f.exact_logit_grad(&mu)[0] - 5.0e-4).abs() < 1e-15);

        let f2 = ToyQuadratic::new(2, TARGET);
        let g = f2.exact_logit_grad(&[0.5, 0.5]);
        assert!((g[0] - 2.5e-4).abs() < 1e-15);
        assert!((g[1] - 2.5e-4).abs() < 1e-15);
    }

    #[test]
    fn toy_exact_mean_matches_brute_force_at_general_eta() {
        let f = ToyQuadratic::new(3, TARGET);
        let mu = [0.2, 0.55, 0.9];
        let mut acc = 0.0;
        for idx in 0..8usize {
            let x: Vec<f64> = (0..3).map(|i| ((idx >> i) & 1) as f64).collect();
            let p: f64 = mu
                .iter()
                .enumerate()
                .map(|(i, &m)| if x[i] == 1.0 { m } else { 1.0 - m })
                .product();
            acc += p * f.eval(&x).value;
        }
        assert!((f.exact_mean(&mu) - acc).abs() < 1e-14);
    }

    #[test]
    fn linear_value_and_gradient() {
        let f = Linear::new(vec![2.0], 0.0);
        let e = f.eval(&[1.0]);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.input_grad, vec![2.0]);
        assert!(e.theta_grad.is_empty());

        let f = Linear::new(vec![1.0, -3.0, 0.5], 2.0);
        let e = f.eval(&[1.0, 1.0, 0.0]);
        assert!((e.value - 0.0).abs() < 1e-15);
    }
}
