//! Adaptation of the scalar control-variate strength alpha.
//!
//! The strength is tuned online by stochastic descent on the squared norm
//! ||g(alpha)||^2 = ||u + alpha v||^2, whose expectation differs from the
//! estimator's total variance only by an alpha-free constant (the estimate is
//! unbiased at every alpha, so minimizing one minimizes the other). Because
//! g is affine in alpha the single-draw gradient is exact:
//! d/d alpha ||u + alpha v||^2 = 2 v . (u + alpha v).

use crate::adam::AdamState;
use crate::estimators::GradEstimate;
use crate::math::dot;

/// The current strength plus the Adam moments that drive its updates.
#[derive(Debug, Clone)]
pub struct AlphaState {
    alpha: f64,
    adam: AdamState,
}

impl Default for AlphaState {
    fn default() -> Self {
        Self::new()
    }
}

impl AlphaState {
    /// Starts at alpha = 0, i.e. the plain leave-one-out baseline.
    pub fn new() -> Self {
        Self { alpha: 0.0, adam: AdamState::new(1) }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// One Adam descent step on alpha along `grad`.
    pub fn adapt(&mut self, grad: f64, lr: f64) {
        let mut params = [self.alpha];
        self.adam.step(&mut params, &[grad], lr);
        self.alpha = params[0];
    }
}

/// Exact single-draw gradient of ||u + alpha v||^2 with respect to alpha.
pub fn alpha_grad(estimate: &GradEstimate, alpha: f64) -> f64 {
    2.0 * (dot(&estimate.v, &estimate.u) + alpha * dot(&estimate.v, &estimate.v))
}

/// Closed-form variance-minimizing strength for estimates written as
/// g - alpha h over paired sample lists: alpha = E[g.h] / E[h.h].
///
/// For our (u, v) split the same lists enter as g = u, h = -v; the ratio is
/// then -E[u.v] / E[v.v]. Returns 0 when h is identically zero (no control
/// variate signal to regress on). With exhaustive-enumeration inputs whose
/// outcome weights are folded in as sqrt-weight scalings of both vectors, the
/// result is the exact population optimum.
pub fn optimal_alpha_k2(g_samples: &[Vec<f64>], h_samples: &[Vec<f64>]) -> f64 {
    assert_eq!(g_samples.len(), h_samples.len(), "sample lists must be paired");
    let mut num = 0.0;
    let mut den = 0.0;
    for (g, h) in g_samples.iter().zip(h_samples) {
        num += dot(g, h);
        den += dot(h, h);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
