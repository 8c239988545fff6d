//! Per-example ELBO integrand for a binary-latent variational autoencoder:
//! f(x) = log p_theta(y | x) + log p(x) - log q_eta(x), with a factorized
//! Bernoulli posterior q_eta, a uniform prior p(x) = 2^{-D}, and an MLP
//! decoder under either a Bernoulli or a diagonal Gaussian likelihood.
//!
//! The input gradient exposed to control variates is the decoder term
//! grad_x log p_theta(y | x) alone: the prior is constant and the entropy term
//! is handled analytically in the update that consumes this objective (see
//! [`bernoulli_entropy_grad`]), not through the relaxed input.

use crate::bernoulli::{log_prob_relaxed, LogitVector};
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};
use crate::mlp::MlpParams;
use crate::objective::{Objective, ObjectiveEval};

const LN_2PI: f64 = 1.8378770664093453;

/// Decoder observation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Likelihood {
    /// Decoder outputs logits; data must lie in [0, 1].
    Bernoulli,
    /// Decoder outputs means with a learned per-pixel log-variance; data is
    /// expected centered in [-1, 1].
    Gaussian,
}

/// ELBO integrand for a single data vector `y`, viewed as an objective over
/// the latent x. Borrows the decoder and the posterior logits; construct one
/// per (example, step) as needed — it is a thin view.
pub struct ElboObjective<'a> {
    decoder: &'a MlpParams,
    eta: &'a LogitVector,
    y: &'a [f64],
    likelihood: Likelihood,
}

impl<'a> ElboObjective<'a> {
    pub fn new(
        decoder: &'a MlpParams,
        eta: &'a LogitVector,
        y: &'a [f64],
        likelihood: Likelihood,
    ) -> Result<Self> {
        if decoder.input_dim() != eta.dim() {
            return Err(Error::DimensionMismatch { expected: decoder.input_dim(), got: eta.dim() });
        }
        if decoder.output_dim() != y.len() {
            return Err(Error::DimensionMismatch { expected: decoder.output_dim(), got: y.len() });
        }
        match likelihood {
            Likelihood::Bernoulli => {
                if decoder.log_var.is_some() {
                    return Err(Error::InvalidArgument(
                        "Bernoulli likelihood does not use a log-variance tail".into(),
                    ));
                }
                if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::InvalidArgument(
                        "Bernoulli likelihood expects data in [0, 1]".into(),
                    ));
                }
            }
            Likelihood::Gaussian => {
                let lv = decoder.log_var.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("Gaussian likelihood requires a log-variance tail".into())
                })?;
                if lv.len() != y.len() {
                    return Err(Error::DimensionMismatch { expected: y.len(), got: lv.len() });
                }
                if y.iter().any(|&v| !(-1.0..=1.0).contains(&v)) {
                    return Err(Error::InvalidArgument(
                        "Gaussian likelihood expects centered data in [-1, 1]".into(),
                    ));
                }
            }
        }
        Ok(Self { decoder, eta, y, likelihood })
    }

    pub fn likelihood(&self) -> Likelihood {
        self.likelihood
    }

    /// log p_theta(y | x) alone — the reconstruction term. Exposed so tests
    /// can difference it directly against `input_grad`.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let (out, _) = self.decoder.forward(x);
        match self.likelihood {
            Likelihood::Bernoulli => self
                .y
                .iter()
                .zip(&out)
                .map(|(&yj, &oj)| yj * oj - softplus(oj))
                .sum(),
            Likelihood::Gaussian => {
                let lv = self.decoder.log_var.as_ref().expect("validated at construction");
                self.y
                    .iter()
                    .zip(&out)
                    .zip(lv)
                    .map(|((&yj, &oj), &l)| {
                        let r = yj - oj;
                        -0.5 * (LN_2PI + l + r * r * (-l).exp())
                    })
                    .sum()
            }
        }
    }

    /// log p(x) under the uniform prior over {0,1}^D: a constant -D log 2.
    pub fn log_prior(&self) -> f64 {
        self.eta.dim() as f64 * 0.5_f64.ln()
    }
}

impl Objective for ElboObjective<'_> {
    fn dim(&self) -> usize {
        self.eta.dim()
    }

    fn eval(&self, x: &[f64]) -> ObjectiveEval {
        assert_eq!(x.len(), self.dim(), "ElboObjective::eval: dimension mismatch");
        let (out, tape) = self.decoder.forward(x);
        let lv_len = self.decoder.log_var.as_ref().map_or(0, Vec::len);

        // Reconstruction value and its gradient with respect to the decoder
        // output, plus (for Gaussian) the log-variance gradient.
        let mut log_lik = 0.0;
        let mut d_out = vec![0.0; out.len()];
        let mut d_log_var = vec![0.0; lv_len];
        match self.likelihood {
            Likelihood::Bernoulli => {
                for (j, (&yj, &oj)) in self.y.iter().zip(&out).enumerate() {
                    log_lik += yj * oj - softplus(oj);
                    d_out[j] = yj - sigmoid(oj);
                }
            }
            Likelihood::Gaussian => {
                let lv = self.decoder.log_var.as_ref().expect("validated at construction");
                for (j, ((&yj, &oj), &l)) in self.y.iter().zip(&out).zip(lv).enumerate() {
                    let inv_var = (-l).exp();
                    let r = yj - oj;
                    log_lik += -0.5 * (LN_2PI + l + r * r * inv_var);
                    d_out[j] = r * inv_var;
                    d_log_var[j] = 0.5 * (r * r * inv_var - 1.0);
                }
            }
        }

        let (input_grad, mut theta_grad) = self.decoder.backward(&tape, &d_out);
        if lv_len > 0 {
            let tail = theta_grad.len() - lv_len;
            theta_grad[tail..].copy_from_slice(&d_log_var);
        }

        let value = log_lik + self.log_prior() - log_prob_relaxed(self.eta, x);
        ObjectiveEval { value, input_grad, theta_grad }
    }
}

/// Gradient with respect to eta of the factorized Bernoulli entropy
/// H(q_eta) = -E_q[log q_eta(x)]: per coordinate -eta_i mu_i (1 - mu_i).
///
/// Training adds this analytic term to the score-function estimate so the
/// estimator itself only has to target the reconstruction objective.
pub fn bernoulli_entropy_grad(eta: &LogitVector) -> Vec<f64> {
    eta.as_slice()
        .iter()
        .map(|&z| {
            let m = sigmoid(z);
            -z * m * (1.0 - m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernoulli::{log_prob, BinarySample};
    use crate::mlp::DEFAULT_LEAK;
    use crate::objective::eval_at_mean;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_decoder_bernoulli_hand_value() {
        // With all-zero decoder weights every output logit is 0, so each data
        // coordinate contributes log 0.5 regardless of y.
        let decoder = MlpParams::zeros(&[1, 2, 3], DEFAULT_LEAK);
        let eta = LogitVector::zeros(1);
        let y = [0.5, 0.5, 0.5];
        let obj = ElboObjective::new(&decoder, &eta, &y, Likelihood::Bernoulli).unwrap();
        let x = [1.0];
        assert!((obj.log_likelihood(&x) - 3.0 * 0.5_f64.ln()).abs() < 1e-12);
        assert!((obj.log_prior() - 0.5_f64.ln()).abs() < 1e-15);
        // Full integrand: log lik + log prior - log q(x), with q(1) = 0.5.
        let expected = 3.0 * 0.5_f64.ln() + 0.5_f64.ln() - 0.5_f64.ln();
        assert!((obj.eval(&x).value - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_decoder_gaussian_hand_value() {
        let decoder = MlpParams::zeros(&[2, 2, 3], DEFAULT_LEAK).with_log_var(3);
        let eta = LogitVector::zeros(2);
        let y = [0.0, 0.0, 0.0];
        let obj = ElboObjective::new(&decoder, &eta, &y, Likelihood::Gaussian).unwrap();
        // Residuals are zero and log-variances are zero: each coordinate
        // contributes -0.5 ln(2 pi).
        assert!((obj.log_likelihood(&[0.0, 1.0]) + 1.5 * LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn value_decomposes_into_three_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let decoder = MlpParams::random(&[3, 4, 4, 5], DEFAULT_LEAK, &mut rng);
        let eta = LogitVector::new(vec![0.2, -1.0, 0.7]).unwrap();
        let y: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let obj = ElboObjective::new(&decoder, &eta, &y, Likelihood::Bernoulli).unwrap();
        for idx in 0..8usize {
            let x = BinarySample::from_index(idx, 3);
            let eval = obj.eval(&x.to_real());
            // log q computed independently by the distribution module.
            let expected = obj.log_likelihood(&x.to_real()) + obj.log_prior() - log_prob(&eta, &x);
            assert!((eval.value - expected).abs() < 1e-10, "idx={idx}");
        }
    }

    #[test]
    fn construction_rejects_mismatches() {
        let decoder = MlpParams::zeros(&[2, 2, 3], DEFAULT_LEAK);
        let eta2 = LogitVector::zeros(2);
        let eta3 = LogitVector::zeros(3);
        let y = [0.0, 1.0, 0.0];

        assert!(ElboObjective::new(&decoder, &eta3, &y, Likelihood::Bernoulli).is_err());
        assert!(ElboObjective::new(&decoder, &eta2, &[0.0, 1.0], Likelihood::Bernoulli).is_err());
        // Gaussian without a log-variance tail.
        assert!(ElboObjective::new(&decoder, &eta2, &y, Likelihood::Gaussian).is_err());
        // Bernoulli data outside [0, 1].
        assert!(ElboObjective::new(&decoder, &eta2, &[0.0, 1.5, 0.0], Likelihood::Bernoulli).is_err());
        // Gaussian data outside [-1, 1].
        let gauss = MlpParams::zeros(&[2, 2, 3], DEFAULT_LEAK).with_log_var(3);
        assert!(ElboObjective::new(&gauss, &eta2, &[0.0, 2.0, 0.0], Likelihood::Gaussian).is_err());
        // Bernoulli with a stray log-variance tail.
        assert!(ElboObjective::new(&gauss, &eta2, &y, Likelihood::Bernoulli).is_err());
    }

    /// Central-difference check of input_grad against the reconstruction term
    /// only: the prior is constant and the entropy term is excluded from the
    /// relaxed input gradient by design.
    #[test]
    fn input_grad_differences_the_reconstruction_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for &likelihood in &[Likelihood::Bernoulli, Likelihood::Gaussian] {
            let mut decoder = MlpParams::random(&[3, 4, 4, 4], DEFAULT_LEAK, &mut rng);
            if likelihood == Likelihood::Gaussian {
                decoder = decoder.with_log_var(4);
                let mut flat = decoder.flatten();
                let n = flat.len();
                for v in &mut flat[n - 4..] {
                    *v = rng.gen_range(-0.5..0.5);
                }
                decoder.set_from_flat(&flat);
            }
            let eta = LogitVector::new(vec![0.3, -0.2, 1.0]).unwrap();
            let y: Vec<f64> = match likelihood {
                Likelihood::Bernoulli => (0..4).map(|_| rng.gen_range(0.0..1.0)).collect(),
                Likelihood::Gaussian => (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let obj = ElboObjective::new(&decoder, &eta, &y, likelihood).unwrap();
            let x = [0.4, 0.8, 0.1];
            let eval = obj.eval(&x);
            let h = 1e-5;
            for i in 0..3 {
                let mut hi = x;
                let mut lo = x;
                hi[i] += h;
                lo[i] -= h;
                let num = (obj.log_likelihood(&hi) - obj.log_likelihood(&lo)) / (2.0 * h);
                let denom = num.abs().max(eval.input_grad[i].abs()).max(1.0);
                assert!(
                    (num - eval.input_grad[i]).abs() / denom < 1e-6,
                    "{likelihood:?} coord {i}: analytic {} vs numeric {num}",
                    eval.input_grad[i]
                );
            }
        }
    }

    #[test]
    fn theta_grad_differences_including_log_var_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let mut decoder = MlpParams::random(&[2, 3, 3], DEFAULT_LEAK, &mut rng).with_log_var(3);
        let mut flat = decoder.flatten();
        let n = flat.len();
        for v in &mut flat[n - 3..] {
            *v = rng.gen_range(-0.4..0.4);
        }
        decoder.set_from_flat(&flat);
        let eta = LogitVector::zeros(2);
        let y = [0.3, -0.6, 0.9];
        let x = [1.0, 0.0];
        let analytic = {
            let obj = ElboObjective::new(&decoder, &eta, &y, Likelihood::Gaussian).unwrap();
            obj.eval(&x).theta_grad
        };
        let h = 1e-5;
        for i in 0..flat.len() {
            let value_at = |delta: f64| {
                let mut perturbed = flat.clone();
                perturbed[i] += delta;
                let mut net = decoder.clone();
                net.set_from_flat(&perturbed);
                let obj = ElboObjective::new(&net, &eta, &y, Likelihood::Gaussian).unwrap();
                obj.eval(&x).value
            };
            let num = (value_at(h) - value_at(-h)) / (2.0 * h);
            let denom = num.abs().max(analytic[i].abs()).max(1.0);
            assert!(
                (num - analytic[i]).abs() / denom < 1e-6,
                "theta {i}: analytic {} vs numeric {num}",
                analytic[i]
            );
        }
    }

    #[test]
    fn eval_at_mean_uses_the_same_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let decoder = MlpParams::random(&[2, 3, 2], DEFAULT_LEAK, &mut rng);
        let eta = LogitVector::new(vec![0.4, -0.9]).unwrap();
        let y = [1.0, 0.0];
        let obj = ElboObjective::new(&decoder, &eta, &y, Likelihood::Bernoulli).unwrap();
        let mu = eta.mean();
        assert_eq!(eval_at_mean(&obj, &mu), obj.eval(&mu));
    }

    #[test]
    fn entropy_grad_matches_central_differences() {
        let entropy = |eta: &[f64]| -> f64 {
            eta.iter()
                .map(|&z| {
                    let m = sigmoid(z);
                    -(m * m.ln() + (1.0 - m) * (1.0 - m).ln())
                })
                .sum()
        };
        let eta = vec![0.7, -1.3, 0.0, 2.5];
        let analytic = bernoulli_entropy_grad(&LogitVector::new(eta.clone()).unwrap());
        let h = 1e-6;
        for i in 0..eta.len() {
            let mut hi = eta.clone();
            let mut lo = eta.clone();
            hi[i] += h;
            lo[i] -= h;
            let num = (entropy(&hi) - entropy(&lo)) / (2.0 * h);
            assert!((num - analytic[i]).abs() < 1e-8, "coord {i}: {} vs {num}", analytic[i]);
        }
        // eta = 0 is the entropy maximum: zero gradient exactly.
        assert_eq!(bernoulli_entropy_grad(&LogitVector::zeros(3)), vec![0.0, 0.0, 0.0]);
    }
}
