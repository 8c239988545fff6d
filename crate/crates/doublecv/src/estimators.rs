//! Score-function gradient estimators for expectations under a factorized
//! Bernoulli distribution, from plain REINFORCE through leave-one-out
//! baselines to gradient-based double control variates.
//!
//! Every estimator consumes a [`SampleBatch`] of jointly evaluated samples and
//! returns a [`GradEstimate`] split as g(alpha) = u + alpha * v: `u` is the
//! alpha-free part and `v` collects everything multiplied by the control
//! variate strength, already including the analytic correction that keeps the
//! estimate unbiased at every alpha. Estimators without a tunable control
//! variate return v = 0 exactly. None of them call the objective; all
//! evaluations happen when the batch is built.

use crate::bernoulli::{mean_and_covdiag, BinarySample, LogitVector};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::objective::{Objective, ObjectiveEval};

/// K samples evaluated under one objective and one posterior, with everything
/// the estimators need precomputed.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    xs: Vec<BinarySample>,
    fvals: Vec<f64>,
    input_grads: Vec<Vec<f64>>,
    scores: Vec<Vec<f64>>,
    mu: Vec<f64>,
    covdiag: Vec<f64>,
}

impl SampleBatch {
    /// Assemble a batch from per-sample objective values and input gradients.
    /// Scores, means, and marginal variances are derived from `eta`.
    pub fn new(
        eta: &LogitVector,
        xs: Vec<BinarySample>,
        fvals: Vec<f64>,
        input_grads: Vec<Vec<f64>>,
    ) -> Self {
        let dim = eta.dim();
        assert!(!xs.is_empty(), "batch must contain at least one sample");
        assert_eq!(xs.len(), fvals.len(), "one objective value per sample");
        assert_eq!(xs.len(), input_grads.len(), "one input gradient per sample");
        for x in &xs {
            assert_eq!(x.dim(), dim, "sample dimension mismatch");
        }
        for g in &input_grads {
            assert_eq!(g.len(), dim, "input gradient dimension mismatch");
        }
        let (mu, covdiag) = mean_and_covdiag(eta);
        let scores = xs
            .iter()
            .map(|x| x.bits().iter().zip(&mu).map(|(&b, &m)| f64::from(b) - m).collect())
            .collect();
        Self { xs, fvals, input_grads, scores, mu, covdiag }
    }

    /// Evaluate `objective` on every sample and assemble the batch.
    pub fn evaluate(eta: &LogitVector, xs: Vec<BinarySample>, objective: &dyn Objective) -> Self {
        assert_eq!(objective.dim(), eta.dim(), "objective dimension mismatch");
        let evals: Vec<ObjectiveEval> = xs.iter().map(|x| objective.eval(&x.to_real())).collect();
        let fvals = evals.iter().map(|e| e.value).collect();
        let input_grads = evals.into_iter().map(|e| e.input_grad).collect();
        Self::new(eta, xs, fvals, input_grads)
    }

    pub fn k(&self) -> usize {
        self.xs.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn samples(&self) -> &[BinarySample] {
        &self.xs
    }

    pub fn fvals(&self) -> &[f64] {
        &self.fvals
    }

    pub fn input_grads(&self) -> &[Vec<f64>] {
        &self.input_grads
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn covdiag(&self) -> &[f64] {
        &self.covdiag
    }

    /// Mean of the per-sample input gradients.
    fn mean_input_grad(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for g in &self.input_grads {
            for (m, &gi) in mean.iter_mut().zip(g) {
                *m += gi;
            }
        }
        let inv_k = 1.0 / self.k() as f64;
        for m in &mut mean {
            *m *= inv_k;
        }
        mean
    }

    /// First-order surrogate values anchored at the batch mean:
    /// b_k = (mean of the other samples' input gradients) . (x_k - mu).
    /// Requires K >= 2.
    fn loo_gradient_surrogates(&self) -> Vec<f64> {
        let k = self.k();
        assert!(k >= 2);
        let dim = self.dim();
        // sum of all input gradients, so each leave-one-out mean is O(D).
        let mut total = vec![0.0; dim];
        for g in &self.input_grads {
            for (t, &gi) in total.iter_mut().zip(g) {
                *t += gi;
            }
        }
        let inv = 1.0 / (k as f64 - 1.0);
        (0..k)
            .map(|i| {
                let gi = &self.input_grads[i];
                let x = self.xs[i].bits();
                let mut b = 0.0;
                for d in 0..dim {
                    let loo_mean = (total[d] - gi[d]) * inv;
                    b += loo_mean * (f64::from(x[d]) - self.mu[d]);
                }
                b
            })
            .collect()
    }
}

/// A gradient estimate split into its alpha-free part `u` and the coefficient
/// `v` of the control-variate strength: g(alpha) = u + alpha * v.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl GradEstimate {
    fn without_cv(u: Vec<f64>) -> Self {
        let v = vec![0.0; u.len()];
        Self { u, v }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// g(alpha) = u + alpha * v.
    pub fn at(&self, alpha: f64) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(&u, &v)| u + alpha * v).collect()
    }
}

/// (1/K) sum_k w_k score(x_k).
fn score_weighted_mean(batch: &SampleBatch, weights: &[f64]) -> Vec<f64> {
    assert_eq!(weights.len(), batch.k());
    let mut acc = vec![0.0; batch.dim()];
    for (w, s) in weights.iter().zip(&batch.scores) {
        for (a, &si) in acc.iter_mut().zip(s) {
            *a += w * si;
        }
    }
    let inv_k = 1.0 / batch.k() as f64;
    for a in &mut acc {
        *a *= inv_k;
    }
    acc
}

/// Leave-one-out contrast applied to arbitrary per-sample values, in the
/// covariance form (1/(K-1)) sum_k (c_k - mean(c)) score(x_k). Algebraically
/// identical to pairing each sample against the mean of the others, at O(K D)
/// instead of O(K^2 D).
fn loo_contrast(batch: &SampleBatch, values: &[f64]) -> Vec<f64> {
    let k = batch.k();
    assert!(k >= 2);
    assert_eq!(values.len(), k);
    let mean = values.iter().sum::<f64>() / k as f64;
    let mut acc = vec![0.0; batch.dim()];
    for (c, s) in values.iter().zip(&batch.scores) {
        let w = c - mean;
        for (a, &si) in acc.iter_mut().zip(s) {
            *a += w * si;
        }
    }
    let inv = 1.0 / (k as f64 - 1.0);
    for a in &mut acc {
        *a *= inv;
    }
    acc
}

fn require_pairs(batch: &SampleBatch, who: &str) -> Result<()> {
    if batch.k() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{who} needs at least 2 samples, got {}",
            batch.k()
        )));
    }
    Ok(())
}

/// Plain score-function estimator with a fixed scalar baseline:
/// (1/K) sum_k (f(x_k) - baseline) score(x_k).
pub fn reinforce(batch: &SampleBatch, baseline: f64) -> GradEstimate {
    let weights: Vec<f64> = batch.fvals.iter().map(|&f| f - baseline).collect();
    GradEstimate::without_cv(score_weighted_mean(batch, &weights))
}

/// Leave-one-out baseline estimator: each sample is centered by the mean of
/// the remaining samples' objective values.
pub fn rloo(batch: &SampleBatch) -> Result<GradEstimate> {
    require_pairs(batch, "leave-one-out estimator")?;
    Ok(GradEstimate::without_cv(loo_contrast(batch, &batch.fvals)))
}

/// The oracle-baseline estimator: centers every sample by the exact mean
/// `exact_ef` = E_q[f] instead of an estimate of it.
pub fn r_star(batch: &SampleBatch, exact_ef: f64) -> GradEstimate {
    let weights: Vec<f64> = batch.fvals.iter().map(|&f| f - exact_ef).collect();
    GradEstimate::without_cv(score_weighted_mean(batch, &weights))
}

/// Double control variate with the surrogate anchored at the mean:
/// b(x) = grad f(mu) . (x - mu), applied through the leave-one-out contrast
/// with the analytic correction covdiag * grad f(mu) subtracted from v.
pub fn double_cv_meanfield(batch: &SampleBatch, f_mu: &ObjectiveEval) -> Result<GradEstimate> {
    require_pairs(batch, "double control variate")?;
    assert_eq!(f_mu.input_grad.len(), batch.dim(), "mean evaluation dimension mismatch");
    let b: Vec<f64> = batch
        .xs
        .iter()
        .map(|x| {
            x.bits()
                .iter()
                .zip(&batch.mu)
                .zip(&f_mu.input_grad)
                .map(|((&bit, &m), &g)| g * (f64::from(bit) - m))
                .sum()
        })
        .collect();
    let u = loo_contrast(batch, &batch.fvals);
    let mut v = loo_contrast(batch, &b);
    for ((vi, &c), &g) in v.iter_mut().zip(&batch.covdiag).zip(&f_mu.input_grad) {
        *vi -= c * g;
    }
    Ok(GradEstimate { u, v })
}

/// Full double control variate: each sample's surrogate is anchored at the
/// mean of the *other* samples' input gradients,
/// b_k = (mean_{j != k} grad f(x_j)) . (x_k - mu), applied with the
/// leave-one-out contrast and corrected by covdiag * mean_k grad f(x_k).
/// Reuses the input gradients already computed for the batch, so it costs no
/// extra objective evaluations over the leave-one-out baseline.
pub fn double_cv_loo(batch: &SampleBatch) -> Result<GradEstimate> {
    require_pairs(batch, "double control variate")?;
    let b = batch.loo_gradient_surrogates();
    let mean_grad = batch.mean_input_grad();
    let u = loo_contrast(batch, &batch.fvals);
    let mut v = loo_contrast(batch, &b);
    for ((vi, &c), &g) in v.iter_mut().zip(&batch.covdiag).zip(&mean_grad) {
        *vi -= c * g;
    }
    Ok(GradEstimate { u, v })
}

/// Which half of the double control variate to keep in [`half_cv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfMode {
    /// Keep only the surrogate paired with each sample's own score,
    /// (1/K) sum_k b_k score(x_k), plus its analytic correction.
    OwnSurrogate,
    /// Keep only the surrogates inside the leave-one-out baseline,
    /// -(1/K) sum_k (mean_{j != k} b_j) score(x_k). No correction is needed:
    /// each b_j with j != k contains the independent zero-mean factor
    /// x_j - mu, so the term's expectation already vanishes.
    OthersSurrogate,
}

/// Ablations that keep only one of the two appearances of the surrogate in
/// [`double_cv_loo`]; `u` is the plain leave-one-out estimate in both modes.
pub fn half_cv(batch: &SampleBatch, mode: HalfMode) -> Result<GradEstimate> {
    require_pairs(batch, "half control variate")?;
    let b = batch.loo_gradient_surrogates();
    let u = loo_contrast(batch, &batch.fvals);
    let k = batch.k() as f64;
    let v = match mode {
        HalfMode::OwnSurrogate => {
            let mut v = score_weighted_mean(batch, &b);
            let mean_grad = batch.mean_input_grad();
            for ((vi, &c), &g) in v.iter_mut().zip(&batch.covdiag).zip(&mean_grad) {
                *vi -= c * g;
            }
            v
        }
        HalfMode::OthersSurrogate => {
            let total: f64 = b.iter().sum();
            let loo_means: Vec<f64> = b.iter().map(|&bk| -(total - bk) / (k - 1.0)).collect();
            score_weighted_mean(batch, &loo_means)
        }
    };
    Ok(GradEstimate { u, v })
}

/// First-order Taylor baseline anchored at the mean:
/// b(x) = f(mu) + grad f(mu) . (x - mu), with the analytic correction
/// covdiag * grad f(mu) added back. Exact (zero variance) for affine f.
pub fn muprop(batch: &SampleBatch, f_mu: &ObjectiveEval) -> GradEstimate {
    assert_eq!(f_mu.input_grad.len(), batch.dim(), "mean evaluation dimension mismatch");
    let weights: Vec<f64> = batch
        .xs
        .iter()
        .zip(&batch.fvals)
        .map(|(x, &f)| {
            let taylor: f64 = x
                .bits()
                .iter()
                .zip(&batch.mu)
                .zip(&f_mu.input_grad)
                .map(|((&bit, &m), &g)| g * (f64::from(bit) - m))
                .sum();
            f - (f_mu.value + taylor)
        })
        .collect();
    let mut u = score_weighted_mean(batch, &weights);
    for ((ui, &c), &g) in u.iter_mut().zip(&batch.covdiag).zip(&f_mu.input_grad) {
        *ui += c * g;
    }
    GradEstimate::without_cv(u)
}

/// Antithetic-pair estimator for K = 2: per coordinate
/// g_i = 1/2 (f(x) - f(xt)) (-1)^{xt_i} 1[x_i != xt_i] sigmoid(|eta_i|).
/// `x` and `xt` must come from an antithetic draw; feeding an independent
/// pair silently biases the estimate (only the enumeration oracle can tell).
pub fn disarm_k2(
    f_pair: (f64, f64),
    x: &BinarySample,
    xt: &BinarySample,
    eta: &LogitVector,
) -> GradEstimate {
    assert_eq!(x.dim(), eta.dim(), "disarm_k2: dimension mismatch");
    assert_eq!(xt.dim(), eta.dim(), "disarm_k2: dimension mismatch");
    let sigma_abs: Vec<f64> = eta.as_slice().iter().map(|&z| sigmoid(z.abs())).collect();
    GradEstimate::without_cv(disarm_core(f_pair, x, xt, &sigma_abs))
}

/// sigmoid(|eta_i|) equals max(mu_i, 1 - mu_i); this form lets batch-driven
/// callers evaluate the estimator from the means alone.
fn disarm_core(f_pair: (f64, f64), x: &BinarySample, xt: &BinarySample, sigma_abs: &[f64]) -> Vec<f64> {
    let half_diff = 0.5 * (f_pair.0 - f_pair.1);
    x.bits()
        .iter()
        .zip(xt.bits())
        .zip(sigma_abs)
        .map(|((&xi, &xti), &s)| {
            if xi == xti {
                0.0
            } else {
                let sign = if xti == 1 { -1.0 } else { 1.0 };
                half_diff * sign * s
            }
        })
        .collect()
}

/// The estimators exposed by the training harness and the oracle, keyed by
/// their command-line names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// `reinforce`: no baseline.
    Reinforce,
    /// `rloo`: leave-one-out baseline.
    Rloo,
    /// `rstar`: exact-mean baseline (needs E_q[f]).
    RStar,
    /// `double-cv`: full double control variate, sample-anchored surrogates.
    DoubleCv,
    /// `double-cv-mf`: double control variate, mean-anchored surrogate.
    DoubleCvMeanField,
    /// `half-bxk`: own-surrogate half of `double-cv`.
    HalfBxk,
    /// `half-bxj`: others-surrogate half of `double-cv`.
    HalfBxj,
    /// `muprop`: first-order Taylor baseline at the mean.
    MuProp,
    /// `disarm`: antithetic-pair estimator.
    Disarm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::Reinforce,
        EstimatorKind::Rloo,
        EstimatorKind::RStar,
        EstimatorKind::DoubleCv,
        EstimatorKind::DoubleCvMeanField,
        EstimatorKind::HalfBxk,
        EstimatorKind::HalfBxj,
        EstimatorKind::MuProp,
        EstimatorKind::Disarm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Reinforce => "reinforce",
            EstimatorKind::Rloo => "rloo",
            EstimatorKind::RStar => "rstar",
            EstimatorKind::DoubleCv => "double-cv",
            EstimatorKind::DoubleCvMeanField => "double-cv-mf",
            EstimatorKind::HalfBxk => "half-bxk",
            EstimatorKind::HalfBxj => "half-bxj",
            EstimatorKind::MuProp => "muprop",
            EstimatorKind::Disarm => "disarm",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator '{name}'")))
    }

    /// Whether the estimator needs an objective evaluation at the mean.
    pub fn needs_mean_eval(&self) -> bool {
        matches!(self, EstimatorKind::DoubleCvMeanField | EstimatorKind::MuProp)
    }

    /// Whether the estimator needs the exact objective mean E_q[f].
    pub fn needs_exact_ef(&self) -> bool {
        matches!(self, EstimatorKind::RStar)
    }

    /// Whether samples must be drawn as antithetic pairs.
    pub fn antithetic(&self) -> bool {
        matches!(self, EstimatorKind::Disarm)
    }

    /// Whether the estimator carries a tunable control-variate strength.
    pub fn has_control_variate(&self) -> bool {
        matches!(
            self,
            EstimatorKind::DoubleCv
                | EstimatorKind::DoubleCvMeanField
                | EstimatorKind::HalfBxk
                | EstimatorKind::HalfBxj
        )
    }

    pub fn min_k(&self) -> usize {
        match self {
            EstimatorKind::Reinforce | EstimatorKind::RStar | EstimatorKind::MuProp => 1,
            _ => 2,
        }
    }

    /// Dispatch on a prepared batch. `ctx` supplies the mean evaluation or
    /// the exact objective mean for the estimators that need one.
    pub fn compute(&self, batch: &SampleBatch, ctx: &EstimatorContext) -> Result<GradEstimate> {
        match self {
            EstimatorKind::Reinforce => Ok(reinforce(batch, 0.0)),
            EstimatorKind::Rloo => rloo(batch),
            EstimatorKind::RStar => {
                let ef = ctx.exact_ef.ok_or_else(|| {
                    Error::InvalidArgument("rstar requires the exact objective mean".into())
                })?;
                Ok(r_star(batch, ef))
            }
            EstimatorKind::DoubleCv => double_cv_loo(batch),
            EstimatorKind::DoubleCvMeanField => {
                let f_mu = ctx.mean_eval.ok_or_else(|| {
                    Error::InvalidArgument("double-cv-mf requires an evaluation at the mean".into())
                })?;
                double_cv_meanfield(batch, f_mu)
            }
            EstimatorKind::HalfBxk => half_cv(batch, HalfMode::OwnSurrogate),
            EstimatorKind::HalfBxj => half_cv(batch, HalfMode::OthersSurrogate),
            EstimatorKind::MuProp => {
                let f_mu = ctx.mean_eval.ok_or_else(|| {
                    Error::InvalidArgument("muprop requires an evaluation at the mean".into())
                })?;
                Ok(muprop(batch, f_mu))
            }
            EstimatorKind::Disarm => {
                if batch.k() != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "disarm dispatch expects an antithetic pair, got {} samples",
                        batch.k()
                    )));
                }
                let sigma_abs: Vec<f64> =
                    batch.mu.iter().map(|&m| m.max(1.0 - m)).collect();
                Ok(GradEstimate::without_cv(disarm_core(
                    (batch.fvals[0], batch.fvals[1]),
                    &batch.xs[0],
                    &batch.xs[1],
                    &sigma_abs,
                )))
            }
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Side inputs some estimators require beyond the batch itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct EstimatorContext<'a> {
    /// Objective evaluated at the mean vector (for `double-cv-mf`, `muprop`).
    pub mean_eval: Option<&'a ObjectiveEval>,
    /// Exact E_q[f] (for `rstar`).
    pub exact_ef: Option<f64>,
}
