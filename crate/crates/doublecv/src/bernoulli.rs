//! Factorized Bernoulli distribution over binary vectors, parameterized by
//! logits: q(x) = prod_i mu_i^{x_i} (1 - mu_i)^{1 - x_i} with mu_i = sigmoid(eta_i).
//!
//! Provides the pieces every estimator in this crate is built from: means and
//! marginal variances, independent and antithetic sampling, stable log
//! probabilities, and the score function grad_eta log q(x) = x - mu.

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};
use rand::Rng;

/// Logits of a factorized Bernoulli distribution. Entries must be finite;
/// the dimension must be at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::InvalidLogits("dimension must be at least 1".into()));
        }
        if let Some(bad) = eta.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidLogits(format!("non-finite entry {bad}")));
        }
        Ok(Self(eta))
    }

    /// All-zero logits: the uniform distribution over {0,1}^dim.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Per-coordinate means mu_i = sigmoid(eta_i).
    pub fn mean(&self) -> Vec<f64> {
        self.0.iter().map(|&z| sigmoid(z)).collect()
    }
}

/// Means and diagonal of the covariance: (mu, mu * (1 - mu)) elementwise.
pub fn mean_and_covdiag(eta: &LogitVector) -> (Vec<f64>, Vec<f64>) {
    let mu = eta.mean();
    let covdiag = mu.iter().map(|&m| m * (1.0 - m)).collect();
    (mu, covdiag)
}

/// A binary outcome x in {0,1}^D.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySample {
    bits: Vec<u8>,
}

impl BinarySample {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidSample("dimension must be at least 1".into()));
        }
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidSample(format!("entry {bad} is not a bit")));
        }
        Ok(Self { bits })
    }

    /// Deterministic threshold rule x_i = 1[u_i < mu_i]. The comparison is
    /// strict, so u_i == mu_i yields 0.
    pub fn from_uniforms(mu: &[f64], uniforms: &[f64]) -> Self {
        assert_eq!(mu.len(), uniforms.len(), "from_uniforms: length mismatch");
        Self { bits: mu.iter().zip(uniforms).map(|(&m, &u)| u8::from(u < m)).collect() }
    }

    /// Build a sample from the bits of `index`, lowest bit first. Used by the
    /// exhaustive enumeration oracle.
    pub fn from_index(index: usize, dim: usize) -> Self {
        assert!(dim >= 1 && dim < usize::BITS as usize);
        Self { bits: (0..dim).map(|i| ((index >> i) & 1) as u8).collect() }
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, i: usize) -> u8 {
        self.bits[i]
    }

    /// The sample as a real vector, for objectives that accept relaxed inputs.
    pub fn to_real(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }
}

/// Draw an antithetic pair from shared uniforms: x_i = 1[u_i < mu_i] and
/// xt_i = 1[1 - u_i < mu_i]. Marginally both are q-distributed; jointly they
/// are negatively coupled per coordinate.
pub fn antithetic_pair_from_uniforms(mu: &[f64], uniforms: &[f64]) -> (BinarySample, BinarySample) {
    assert_eq!(mu.len(), uniforms.len(), "antithetic_pair_from_uniforms: length mismatch");
    let x = BinarySample::from_uniforms(mu, uniforms);
    let flipped: Vec<f64> = uniforms.iter().map(|&u| 1.0 - u).collect();
    let xt = BinarySample::from_uniforms(mu, &flipped);
    (x, xt)
}

/// Draw `k` samples from q_eta. With `antithetic` set, `k` must be 2 and the
/// two samples share uniforms as in [`antithetic_pair_from_uniforms`].
/// Uniforms are consumed sample-major, coordinate-minor, so a fixed seed and
/// dimension fully determine the draw.
pub fn sample_batch<R: Rng + ?Sized>(
    eta: &LogitVector,
    rng: &mut R,
    k: usize,
    antithetic: bool,
) -> Result<Vec<BinarySample>> {
    if k == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mu = eta.mean();
    if antithetic {
        if k != 2 {
            return Err(Error::InvalidArgument(format!(
                "antithetic sampling requires k = 2, got {k}"
            )));
        }
        let uniforms: Vec<f64> = (0..eta.dim()).map(|_| rng.gen::<f64>()).collect();
        let (x, xt) = antithetic_pair_from_uniforms(&mu, &uniforms);
        return Ok(vec![x, xt]);
    }
    Ok((0..k)
        .map(|_| {
            let uniforms: Vec<f64> = (0..eta.dim()).map(|_| rng.gen::<f64>()).collect();
            BinarySample::from_uniforms(&mu, &uniforms)
        })
        .collect())
}

/// log q_eta(x) computed in logit space: sum_i [x_i eta_i - softplus(eta_i)].
/// Equivalent to sum_i [x_i log mu_i + (1 - x_i) log(1 - mu_i)] but stable for
/// extreme logits.
pub fn log_prob(eta: &LogitVector, x: &BinarySample) -> f64 {
    assert_eq!(eta.dim(), x.dim(), "log_prob: dimension mismatch");
    log_prob_relaxed(eta, &x.to_real())
}

/// The same expression evaluated at a real-valued x. It is affine in x and
/// coincides with [`log_prob`] on binary inputs; the ELBO objective uses it to
/// extend the integrand to the mean vector.
pub fn log_prob_relaxed(eta: &LogitVector, x: &[f64]) -> f64 {
    assert_eq!(eta.dim(), x.len(), "log_prob_relaxed: dimension mismatch");
    eta.as_slice()
        .iter()
        .zip(x)
        .map(|(&z, &xi)| xi * z - softplus(z))
        .sum()
}

/// Score function grad_eta log q_eta(x) = x - mu, one entry per logit.
pub fn score(eta: &LogitVector, x: &BinarySample) -> Vec<f64> {
    assert_eq!(eta.dim(), x.dim(), "score: dimension mismatch");
    let mu = eta.mean();
    x.bits().iter().zip(&mu).map(|(&b, &m)| f64::from(b) - m).collect()
}
