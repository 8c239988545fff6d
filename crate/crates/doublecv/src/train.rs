//! Training loops for the toy quadratic problem and the discrete-latent
//! variational autoencoder.
//!
//! Both loops follow the same per-step order: draw samples, evaluate the
//! objective once per sample (value, input gradient, and parameter gradient
//! come from the same pass), build the gradient estimate, update the
//! variational parameters by ascent, update the model parameters by ascent
//! (autoencoder only), then adapt the control-variate strength on the same
//! batch. The strength recorded and used at step t is therefore the value
//! produced by step t-1's adaptation.
//!
//! Randomness is split into fixed ChaCha streams per seed: parameter
//! initialization, the training draws, and the variance probe. The probe
//! stream is re-cloned from its initial state at every probe, so probe
//! results depend only on the parameters being probed — frozen parameters
//! give identical records — and probing never perturbs the training
//! trajectory.

use std::cell::Cell;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::AdamState;
use crate::alpha::{alpha_grad, AlphaState};
use crate::bernoulli::{log_prob, log_prob_relaxed, sample_batch, LogitVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorContext, EstimatorKind, GradEstimate, SampleBatch};
use crate::metrics::StepRecord;
use crate::mlp::{MlpParams, DEFAULT_LEAK};
use crate::objective::{Objective, ObjectiveEval, ToyQuadratic};
use crate::oracle;
use crate::vae::{bernoulli_entropy_grad, ElboObjective, Likelihood};

const STREAM_INIT: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_PROBE: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Which optimizer drives the parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

enum OptState {
    Adam(AdamState),
    Sgd,
}

impl OptState {
    fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Adam => OptState::Adam(AdamState::new(len)),
            OptimizerKind::Sgd => OptState::Sgd,
        }
    }

    /// Move `params` in the direction of `grad` (ascent).
    fn ascend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptState::Adam(state) => {
                let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
                state.step(params, &descent, lr);
            }
            OptState::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += lr * g;
                }
            }
        }
    }
}

/// What is being trained.
#[derive(Debug, Clone)]
pub enum ObjectiveSpec {
    /// Maximize E[(1/D) sum (x_i - p0)^2] over the latent distribution.
    Toy { dim: usize, p0: f64 },
    /// Maximize the ELBO of a latent-Bernoulli autoencoder with an MLP
    /// encoder and decoder (the encoder mirrors the decoder's shape).
    Vae {
        dataset: Dataset,
        likelihood: Likelihood,
        latent: usize,
        hidden: usize,
        minibatch: usize,
    },
}

/// Complete description of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub objective: ObjectiveSpec,
    pub estimator: EstimatorKind,
    pub k: usize,
    pub steps: usize,
    pub seed: u64,
    /// Learning rate for the variational parameters (the logits, or the
    /// encoder producing them).
    pub lr: f64,
    /// Learning rate for the decoder parameters.
    pub theta_lr: f64,
    /// Learning rate for the control-variate strength.
    pub alpha_lr: f64,
    pub optimizer: OptimizerKind,
    /// Emit a record (and run the variance probe) at step 1 and every
    /// `probe_every` steps.
    pub probe_every: usize,
    /// Replicates per variance probe.
    pub probe_reps: usize,
    /// Optionally probe a second estimator at every probe point, at the same
    /// frozen parameters and with the same probe draws. This isolates the
    /// estimator comparison from trajectory divergence: two independent runs
    /// visit different parameters, so their probe columns compare estimators
    /// at unrelated points, while the reference probe compares them at the
    /// exact same point. Reference probes never touch the training stream.
    pub probe_reference: Option<EstimatorKind>,
}

impl TrainConfig {
    /// Defaults shared by both objectives: K=2, Adam everywhere at 1e-3,
    /// probe every 100 steps with 100 replicates.
    pub fn new(objective: ObjectiveSpec, estimator: EstimatorKind) -> Self {
        Self {
            objective,
            estimator,
            k: 2,
            steps: 1000,
            seed: 0,
            lr: 1e-3,
            theta_lr: 1e-3,
            alpha_lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            probe_every: 100,
            probe_reps: 100,
            probe_reference: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.k < self.estimator.min_k() {
            return Err(Error::InvalidArgument(format!(
                "{} needs at least {} samples per step, got {}",
                self.estimator,
                self.estimator.min_k(),
                self.k
            )));
        }
        if self.estimator.antithetic() && !(self.k == 2 || self.k == 4) {
            return Err(Error::InvalidArgument(format!(
                "antithetic estimator supports k = 2 or 4, got {}",
                self.k
            )));
        }
        // Zero rates are allowed: a frozen run is the cheapest way to probe
        // an estimator at fixed parameters.
        for (name, lr) in [("lr", self.lr), ("theta-lr", self.theta_lr), ("alpha-lr", self.alpha_lr)]
        {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        if self.probe_every < 1 {
            return Err(Error::InvalidArgument("probe-every must be at least 1".into()));
        }
        if self.probe_reps < 2 {
            return Err(Error::InvalidArgument("probe-reps must be at least 2".into()));
        }
        if let Some(reference) = self.probe_reference {
            if self.k < reference.min_k() {
                return Err(Error::InvalidArgument(format!(
                    "reference estimator {} needs at least {} samples, got {}",
                    reference,
                    reference.min_k(),
                    self.k
                )));
            }
            if reference.antithetic() && !(self.k == 2 || self.k == 4) {
                return Err(Error::InvalidArgument(format!(
                    "antithetic reference estimator supports k = 2 or 4, got {}",
                    self.k
                )));
            }
        }
        match &self.objective {
            ObjectiveSpec::Toy { dim, p0 } => {
                if *dim < 1 {
                    return Err(Error::InvalidArgument("toy dimension must be >= 1".into()));
                }
                if !(p0.is_finite() && *p0 > 0.0 && *p0 < 1.0) {
                    return Err(Error::InvalidArgument("toy p0 must lie in (0, 1)".into()));
                }
            }
            ObjectiveSpec::Vae { dataset, latent, hidden, minibatch, .. } => {
                if dataset.is_empty() {
                    return Err(Error::InvalidArgument("dataset is empty".into()));
                }
                if *latent < 1 || *hidden < 1 {
                    return Err(Error::InvalidArgument(
                        "latent and hidden widths must be >= 1".into(),
                    ));
                }
                if *minibatch < 1 {
                    return Err(Error::InvalidArgument("minibatch must be >= 1".into()));
                }
                let wants_exact_ef = self.estimator.needs_exact_ef()
                    || self.probe_reference.is_some_and(|r| r.needs_exact_ef());
                if wants_exact_ef {
                    return Err(Error::InvalidArgument(
                        "the exact-mean baseline needs a closed-form objective mean; \
                         it is only available for the toy objective"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Result of a run: the probe records plus cost instrumentation. An
/// "evaluation" is one objective call, which for the autoencoder is exactly
/// one decoder forward-and-backward pass.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<StepRecord>,
    /// Objective evaluations consumed by parameter updates.
    pub train_evals: u64,
    /// Objective evaluations consumed by variance probes.
    pub probe_evals: u64,
    /// Reference-estimator variance at each probe point, aligned with
    /// `records`. Empty unless `probe_reference` was set.
    pub reference_variance: Vec<f64>,
}

/// Objective wrapper that counts evaluations, for cost-parity accounting.
struct CountingObjective<'a> {
    inner: &'a dyn Objective,
    count: &'a Cell<u64>,
}

impl Objective for CountingObjective<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[f64]) -> ObjectiveEval {
        self.count.set(self.count.get() + 1);
        self.inner.eval(x)
    }
}

/// Run the configured training loop.
pub fn run_training(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    match &config.objective {
        ObjectiveSpec::Toy { dim, p0 } => run_toy(config, *dim, *p0),
        ObjectiveSpec::Vae { dataset, likelihood, latent, hidden, minibatch } => {
            run_vae(config, dataset, *likelihood, *latent, *hidden, *minibatch)
        }
    }
}

fn probe_due(step: usize, probe_every: usize) -> bool {
    step == 1 || step % probe_every == 0
}

/// One gradient estimate at fixed parameters: draws the samples, evaluates
/// the objective on each, and dispatches the estimator. Two antithetic pairs
/// are averaged when the antithetic estimator runs at k = 4.
fn estimate_once(
    kind: EstimatorKind,
    eta: &LogitVector,
    objective: &dyn Objective,
    k: usize,
    ctx: &EstimatorContext,
    rng: &mut ChaCha8Rng,
) -> Result<GradEstimate> {
    if kind.antithetic() && k == 4 {
        let a = estimate_once(kind, eta, objective, 2, ctx, rng)?;
        let b = estimate_once(kind, eta, objective, 2, ctx, rng)?;
        return Ok(average_estimates(&a, &b));
    }
    let xs = sample_batch(eta, rng, k, kind.antithetic())?;
    let batch = SampleBatch::evaluate(eta, xs, objective);
    kind.compute(&batch, ctx)
}

fn average_estimates(a: &GradEstimate, b: &GradEstimate) -> GradEstimate {
    GradEstimate {
        u: a.u.iter().zip(&b.u).map(|(x, y)| 0.5 * (x + y)).collect(),
        v: a.v.iter().zip(&b.v).map(|(x, y)| 0.5 * (x + y)).collect(),
    }
}

fn run_toy(config: &TrainConfig, dim: usize, p0: f64) -> Result<TrainOutcome> {
    let toy = ToyQuadratic::new(dim, p0);
    let train_evals = Cell::new(0u64);
    let probe_evals = Cell::new(0u64);
    let mut eta_vec = vec![0.0; dim];
    let mut opt = OptState::new(config.optimizer, dim);
    let mut alpha_state = AlphaState::new();
    let mut train_rng = stream_rng(config.seed, STREAM_TRAIN);
    let mut records = Vec::new();
    let mut reference_variance = Vec::new();
    let start = Instant::now();

    for step in 1..=config.steps {
        let eta = LogitVector::new(eta_vec.clone()).expect("updates keep logits finite");
        let mu = eta.mean();
        let alpha = alpha_state.alpha();

        if probe_due(step, config.probe_every) {
            let probe_toy = |kind: EstimatorKind| -> Result<f64> {
                let probing = CountingObjective { inner: &toy, count: &probe_evals };
                let mut probe_rng = stream_rng(config.seed, STREAM_PROBE);
                let exact_ef = kind.needs_exact_ef().then(|| toy.exact_mean(&mu));
                oracle::empirical_variance(
                    kind,
                    &eta,
                    &probing,
                    config.k,
                    alpha,
                    exact_ef,
                    config.probe_reps,
                    &mut probe_rng,
                )
            };
            let grad_variance = probe_toy(config.estimator)?;
            if let Some(reference) = config.probe_reference {
                reference_variance.push(probe_toy(reference)?);
            }
            records.push(StepRecord {
                step,
                objective: toy.exact_mean(&mu),
                grad_variance,
                alpha,
                mean_sigma_eta: mu.iter().sum::<f64>() / dim as f64,
                wall_secs: start.elapsed().as_secs_f64(),
            });
        }

        let counting = CountingObjective { inner: &toy, count: &train_evals };
        let mean_eval;
        let mut ctx = EstimatorContext::default();
        if config.estimator.needs_mean_eval() {
            mean_eval = counting.eval(&mu);
            ctx.mean_eval = Some(&mean_eval);
        }
        if config.estimator.needs_exact_ef() {
            ctx.exact_ef = Some(toy.exact_mean(&mu));
        }
        let est = estimate_once(config.estimator, &eta, &counting, config.k, &ctx, &mut train_rng)?;
        let g = est.at(alpha);
        opt.ascend(&mut eta_vec, &g, config.lr);
        alpha_state.adapt(alpha_grad(&est, alpha), config.alpha_lr);
    }

    Ok(TrainOutcome {
        records,
        train_evals: train_evals.get(),
        probe_evals: probe_evals.get(),
        reference_variance,
    })
}

/// Everything one example contributes to a step: the estimator split in
/// logit space, the summed decoder gradient, and the summed objective value
/// over its samples.
struct ExampleOutcome {
    est: GradEstimate,
    theta_grad_sum: Vec<f64>,
    value_sum: f64,
    samples: usize,
}

/// Evaluate one example's K samples and build its gradient estimate.
///
/// The objective handed to the estimators is the joint term
/// log p(y|x) + log p(x): the -log q part of the ELBO is stripped from the
/// sampled values (and from the mean evaluation) because its expectation,
/// the entropy, has an exact gradient that the caller adds analytically.
/// Both splits are unbiased for the full ELBO gradient; the analytic route
/// removes the entropy term's sampling noise.
fn vae_example(
    kind: EstimatorKind,
    decoder: &MlpParams,
    eta: &LogitVector,
    y: &[f64],
    likelihood: Likelihood,
    k: usize,
    rng: &mut ChaCha8Rng,
    evals: &Cell<u64>,
) -> Result<ExampleOutcome> {
    if kind.antithetic() && k == 4 {
        let a = vae_example(kind, decoder, eta, y, likelihood, 2, rng, evals)?;
        let b = vae_example(kind, decoder, eta, y, likelihood, 2, rng, evals)?;
        return Ok(ExampleOutcome {
            est: average_estimates(&a.est, &b.est),
            theta_grad_sum: a
                .theta_grad_sum
                .iter()
                .zip(&b.theta_grad_sum)
                .map(|(x, y)| x + y)
                .collect(),
            value_sum: a.value_sum + b.value_sum,
            samples: a.samples + b.samples,
        });
    }

    let elbo = ElboObjective::new(decoder, eta, y, likelihood)?;
    let counting = CountingObjective { inner: &elbo, count: evals };
    let xs = sample_batch(eta, rng, k, kind.antithetic())?;

    let mut fvals = Vec::with_capacity(k);
    let mut input_grads = Vec::with_capacity(k);
    let mut theta_grad_sum = vec![0.0; decoder.n_params()];
    let mut value_sum = 0.0;
    for x in &xs {
        let eval = counting.eval(&x.to_real());
        value_sum += eval.value;
        fvals.push(eval.value + log_prob(eta, x));
        input_grads.push(eval.input_grad);
        for (acc, g) in theta_grad_sum.iter_mut().zip(&eval.theta_grad) {
            *acc += g;
        }
    }
    let batch = SampleBatch::new(eta, xs, fvals, input_grads);

    let mean_eval;
    let mut ctx = EstimatorContext::default();
    if kind.needs_mean_eval() {
        let mu = eta.mean();
        let mut eval = counting.eval(&mu);
        eval.value += log_prob_relaxed(eta, &mu);
        mean_eval = eval;
        ctx.mean_eval = Some(&mean_eval);
    }
    let est = kind.compute(&batch, &ctx)?;
    Ok(ExampleOutcome { est, theta_grad_sum, value_sum, samples: k })
}

fn run_vae(
    config: &TrainConfig,
    dataset: &Dataset,
    likelihood: Likelihood,
    latent: usize,
    hidden: usize,
    minibatch: usize,
) -> Result<TrainOutcome> {
    let y_dim = dataset.dim();
    let mut init_rng = stream_rng(config.seed, STREAM_INIT);
    let encoder_sizes = [y_dim, hidden, hidden, latent];
    let decoder_sizes = [latent, hidden, hidden, y_dim];
    let mut encoder = MlpParams::random(&encoder_sizes, DEFAULT_LEAK, &mut init_rng);
    let mut decoder = MlpParams::random(&decoder_sizes, DEFAULT_LEAK, &mut init_rng);
    if likelihood == Likelihood::Gaussian {
        decoder = decoder.with_log_var(y_dim);
    }
    let mut enc_flat = encoder.flatten();
    let mut dec_flat = decoder.flatten();
    let mut enc_opt = OptState::new(config.optimizer, enc_flat.len());
    let mut dec_opt = OptState::new(config.optimizer, dec_flat.len());
    let mut alpha_state = AlphaState::new();
    let train_evals = Cell::new(0u64);
    let probe_evals = Cell::new(0u64);
    let mut train_rng = stream_rng(config.seed, STREAM_TRAIN);
    let mut records = Vec::new();
    let mut reference_variance = Vec::new();
    let start = Instant::now();

    for step in 1..=config.steps {
        let alpha = alpha_state.alpha();

        if probe_due(step, config.probe_every) {
            let (grad_variance, objective, mean_sigma_eta) = probe_vae(
                config,
                config.estimator,
                dataset,
                likelihood,
                minibatch,
                &encoder,
                &decoder,
                alpha,
                &probe_evals,
            )?;
            if let Some(reference) = config.probe_reference {
                let (reference_var, _, _) = probe_vae(
                    config,
                    reference,
                    dataset,
                    likelihood,
                    minibatch,
                    &encoder,
                    &decoder,
                    alpha,
                    &probe_evals,
                )?;
                reference_variance.push(reference_var);
            }
            records.push(StepRecord {
                step,
                objective,
                grad_variance,
                alpha,
                mean_sigma_eta,
                wall_secs: start.elapsed().as_secs_f64(),
            });
        }

        let mut enc_grad = vec![0.0; enc_flat.len()];
        let mut dec_grad = vec![0.0; dec_flat.len()];
        let mut alpha_grad_sum = 0.0;
        let mut samples_total = 0usize;
        for _ in 0..minibatch {
            let idx = train_rng.gen_range(0..dataset.len());
            let y = match likelihood {
                Likelihood::Bernoulli => dataset.binarized(idx, &mut train_rng),
                Likelihood::Gaussian => dataset.continuous(idx),
            };
            let (eta_raw, tape) = encoder.forward(&y);
            let eta = LogitVector::new(eta_raw)?;
            let out = vae_example(
                config.estimator,
                &decoder,
                &eta,
                &y,
                likelihood,
                config.k,
                &mut train_rng,
                &train_evals,
            )?;
            let mut g_eta = out.est.at(alpha);
            for (g, h) in g_eta.iter_mut().zip(bernoulli_entropy_grad(&eta)) {
                *g += h;
            }
            let (_, d_enc) = encoder.backward(&tape, &g_eta);
            for (acc, g) in enc_grad.iter_mut().zip(&d_enc) {
                *acc += g;
            }
            for (acc, g) in dec_grad.iter_mut().zip(&out.theta_grad_sum) {
                *acc += g;
            }
            alpha_grad_sum += alpha_grad(&out.est, alpha);
            samples_total += out.samples;
        }
        let inv_b = 1.0 / minibatch as f64;
        for g in &mut enc_grad {
            *g *= inv_b;
        }
        let inv_bk = 1.0 / samples_total as f64;
        for g in &mut dec_grad {
            *g *= inv_bk;
        }
        enc_opt.ascend(&mut enc_flat, &enc_grad, config.lr);
        dec_opt.ascend(&mut dec_flat, &dec_grad, config.theta_lr);
        encoder.set_from_flat(&enc_flat);
        decoder.set_from_flat(&dec_flat);
        alpha_state.adapt(alpha_grad_sum * inv_b, config.alpha_lr);
    }

    Ok(TrainOutcome {
        records,
        train_evals: train_evals.get(),
        probe_evals: probe_evals.get(),
        reference_variance,
    })
}

/// Variance probe for the autoencoder: freeze the parameters, draw one probe
/// minibatch from the probe stream, then replicate the per-example gradient
/// estimates with fresh latent draws. Returns the total variance of the
/// stacked logit-space estimate, the mean ELBO over all probe evaluations,
/// and the mean of sigmoid(eta) over the probe batch. The probe stream always
/// restarts from the same state, so probing two estimators back to back
/// compares them on identical probe minibatches and uniform draws.
#[allow(clippy::too_many_arguments)]
fn probe_vae(
    config: &TrainConfig,
    kind: EstimatorKind,
    dataset: &Dataset,
    likelihood: Likelihood,
    minibatch: usize,
    encoder: &MlpParams,
    decoder: &MlpParams,
    alpha: f64,
    probe_evals: &Cell<u64>,
) -> Result<(f64, f64, f64)> {
    let mut rng = stream_rng(config.seed, STREAM_PROBE);
    let mut etas = Vec::with_capacity(minibatch);
    let mut ys = Vec::with_capacity(minibatch);
    let mut sigma_sum = 0.0;
    for _ in 0..minibatch {
        let idx = rng.gen_range(0..dataset.len());
        let y = match likelihood {
            Likelihood::Bernoulli => dataset.binarized(idx, &mut rng),
            Likelihood::Gaussian => dataset.continuous(idx),
        };
        let (eta_raw, _) = encoder.forward(&y);
        let eta = LogitVector::new(eta_raw)?;
        let mu = eta.mean();
        sigma_sum += mu.iter().sum::<f64>() / mu.len() as f64;
        etas.push(eta);
        ys.push(y);
    }

    let latent = etas[0].dim();
    let stacked_dim = minibatch * latent;
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(config.probe_reps);
    let mut value_sum = 0.0;
    let mut value_count = 0usize;
    for _ in 0..config.probe_reps {
        let mut stacked = Vec::with_capacity(stacked_dim);
        for (eta, y) in etas.iter().zip(&ys) {
            let out = vae_example(
                kind,
                decoder,
                eta,
                y,
                likelihood,
                config.k,
                &mut rng,
                probe_evals,
            )?;
            stacked.extend(out.est.at(alpha));
            value_sum += out.value_sum;
            value_count += out.samples;
        }
        draws.push(stacked);
    }

    let reps = draws.len() as f64;
    let mut mean = vec![0.0; stacked_dim];
    for d in &draws {
        for (m, &g) in mean.iter_mut().zip(d) {
            *m += g / reps;
        }
    }
    let mut total = 0.0;
    for d in &draws {
        for (m, &g) in mean.iter().zip(d) {
            total += (g - m) * (g - m);
        }
    }
    let grad_variance = total / (reps - 1.0);
    let objective = value_sum / value_count as f64;
    let mean_sigma_eta = sigma_sum / minibatch as f64;
    Ok((grad_variance, objective, mean_sigma_eta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(estimator: EstimatorKind) -> TrainConfig {
        let mut config = TrainConfig::new(
            ObjectiveSpec::Toy { dim: 3, p0: 0.499 },
            estimator,
        );
        config.steps = 30;
        config.probe_every = 10;
        config.probe_reps = 10;
        config
    }

    fn tiny_vae_config(estimator: EstimatorKind, likelihood: Likelihood) -> TrainConfig {
        let mut config = TrainConfig::new(
            ObjectiveSpec::Vae {
                dataset: Dataset::synthetic(8, 3, 3, 7),
                likelihood,
                latent: 2,
                hidden: 3,
                minibatch: 2,
            },
            estimator,
        );
        config.steps = 12;
        config.probe_every = 5;
        config.probe_reps = 3;
        config
    }

    fn strip_wall(records: &[StepRecord]) -> Vec<StepRecord> {
        records.iter().map(|r| StepRecord { wall_secs: 0.0, ..r.clone() }).collect()
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut config = toy_config(EstimatorKind::Rloo);
        config.k = 1;
        assert!(run_training(&config).is_err());

        let mut config = toy_config(EstimatorKind::Disarm);
        config.k = 3;
        assert!(run_training(&config).is_err());

        let mut config = toy_config(EstimatorKind::Rloo);
        config.steps = 0;
        assert!(run_training(&config).is_err());

        let mut config = toy_config(EstimatorKind::Rloo);
        config.probe_reps = 1;
        assert!(run_training(&config).is_err());

        let mut config = toy_config(EstimatorKind::Rloo);
        config.lr = -1e-3;
        assert!(run_training(&config).is_err());

        let mut config = toy_config(EstimatorKind::Rloo);
        config.objective = ObjectiveSpec::Toy { dim: 3, p0: 1.5 };
        assert!(run_training(&config).is_err());

        // The exact-mean baseline has no closed form under the autoencoder.
        let config = tiny_vae_config(EstimatorKind::RStar, Likelihood::Bernoulli);
        assert!(run_training(&config).is_err());
    }

    #[test]
    fn zero_learning_rates_freeze_all_records() {
        let mut config = toy_config(EstimatorKind::DoubleCv);
        config.lr = 0.0;
        config.alpha_lr = 0.0;
        config.steps = 40;
        let outcome = run_training(&config).unwrap();
        assert!(outcome.records.len() > 2);
        let first = &outcome.records[0];
        for r in &outcome.records[1..] {
            assert_eq!(r.objective.to_bits(), first.objective.to_bits());
            assert_eq!(r.grad_variance.to_bits(), first.grad_variance.to_bits());
            assert_eq!(r.alpha.to_bits(), first.alpha.to_bits());
            assert_eq!(r.mean_sigma_eta.to_bits(), first.mean_sigma_eta.to_bits());
        }

        let mut config = tiny_vae_config(EstimatorKind::Rloo, Likelihood::Bernoulli);
        config.lr = 0.0;
        config.theta_lr = 0.0;
        config.alpha_lr = 0.0;
        let outcome = run_training(&config).unwrap();
        let first = &outcome.records[0];
        for r in &outcome.records[1..] {
            assert_eq!(r.objective.to_bits(), first.objective.to_bits());
            assert_eq!(r.grad_variance.to_bits(), first.grad_variance.to_bits());
            assert_eq!(r.mean_sigma_eta.to_bits(), first.mean_sigma_eta.to_bits());
        }
    }

    #[test]
    fn equal_seeds_reproduce_records_bitwise() {
        for config in [
            toy_config(EstimatorKind::DoubleCvMeanField),
            tiny_vae_config(EstimatorKind::DoubleCv, Likelihood::Bernoulli),
            tiny_vae_config(EstimatorKind::MuProp, Likelihood::Gaussian),
        ] {
            let a = run_training(&config).unwrap();
            let b = run_training(&config).unwrap();
            assert_eq!(strip_wall(&a.records), strip_wall(&b.records));
            assert_eq!(a.train_evals, b.train_evals);

            let mut other = config.clone();
            other.seed = 99;
            let c = run_training(&other).unwrap();
            assert_ne!(strip_wall(&a.records), strip_wall(&c.records));
        }
    }

    #[test]
    fn first_record_uses_zero_strength_and_steps_increase() {
        let mut config = toy_config(EstimatorKind::DoubleCv);
        config.steps = 50;
        let outcome = run_training(&config).unwrap();
        assert_eq!(outcome.records[0].step, 1);
        assert_eq!(outcome.records[0].alpha, 0.0);
        for pair in outcome.records.windows(2) {
            assert!(pair[1].step > pair[0].step);
        }
        // Adaptation moved the strength by the time of the second probe.
        assert_ne!(outcome.records[1].alpha, 0.0);
        for r in &outcome.records {
            for v in [r.objective, r.grad_variance, r.alpha, r.mean_sigma_eta, r.wall_secs] {
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn update_cost_matches_between_full_cv_and_loo_baseline() {
        let evals = |kind| {
            let config = toy_config(kind);
            run_training(&config).unwrap().train_evals
        };
        // The full control variate reuses the gradients of the K evaluations
        // the baseline already needs; only the mean-anchored variants pay for
        // an extra evaluation at the mean.
        assert_eq!(evals(EstimatorKind::DoubleCv), evals(EstimatorKind::Rloo));
        assert_eq!(
            evals(EstimatorKind::DoubleCvMeanField),
            evals(EstimatorKind::Rloo) + 30
        );

        let vae_evals = |kind| {
            let config = tiny_vae_config(kind, Likelihood::Bernoulli);
            run_training(&config).unwrap().train_evals
        };
        assert_eq!(vae_evals(EstimatorKind::DoubleCv), vae_evals(EstimatorKind::Rloo));
    }

    #[test]
    fn antithetic_estimator_runs_at_two_and_four_samples() {
        for k in [2usize, 4] {
            let mut config = toy_config(EstimatorKind::Disarm);
            config.k = k;
            let outcome = run_training(&config).unwrap();
            assert_eq!(outcome.train_evals, 30 * k as u64);

            let mut config = tiny_vae_config(EstimatorKind::Disarm, Likelihood::Bernoulli);
            config.k = k;
            run_training(&config).unwrap();
        }
    }

    #[test]
    fn reference_probe_shares_draws_with_the_main_probe() {
        // Probing the run's own estimator as the reference must reproduce the
        // main probe bitwise: both probes restart the probe stream, so they
        // see identical minibatches and uniforms.
        for mut config in [
            toy_config(EstimatorKind::Rloo),
            tiny_vae_config(EstimatorKind::Rloo, Likelihood::Bernoulli),
        ] {
            config.probe_reference = Some(EstimatorKind::Rloo);
            let outcome = run_training(&config).unwrap();
            assert_eq!(outcome.reference_variance.len(), outcome.records.len());
            for (record, reference) in outcome.records.iter().zip(&outcome.reference_variance) {
                assert_eq!(record.grad_variance, *reference);
            }
        }

        // Without a reference the vector stays empty.
        let outcome = run_training(&toy_config(EstimatorKind::Rloo)).unwrap();
        assert!(outcome.reference_variance.is_empty());

        // A reference that needs more samples than the run provides is
        // rejected up front.
        let mut config = toy_config(EstimatorKind::Reinforce);
        config.k = 1;
        config.probe_reference = Some(EstimatorKind::Rloo);
        assert!(run_training(&config).is_err());
    }

    #[test]
    fn sgd_and_adam_produce_different_trajectories() {
        let mut adam = toy_config(EstimatorKind::Rloo);
        adam.steps = 60;
        let mut sgd = adam.clone();
        sgd.optimizer = OptimizerKind::Sgd;
        let a = run_training(&adam).unwrap();
        let s = run_training(&sgd).unwrap();
        assert_ne!(strip_wall(&a.records), strip_wall(&s.records));
        // SGD is deterministic per seed too.
        let s2 = run_training(&sgd).unwrap();
        assert_eq!(strip_wall(&s.records), strip_wall(&s2.records));
    }

    #[test]
    fn toy_training_drives_the_mean_upward() {
        // With p0 just below one half, the optimum pushes every mu_i to 1.
        // A short run cannot get there, but the trend must be upward and the
        // objective must improve.
        let mut config = toy_config(EstimatorKind::DoubleCv);
        config.objective = ObjectiveSpec::Toy { dim: 5, p0: 0.3 };
        config.steps = 2000;
        config.probe_every = 500;
        config.probe_reps = 20;
        let outcome = run_training(&config).unwrap();
        let first = outcome.records.first().unwrap();
        let last = outcome.records.last().unwrap();
        assert!(last.mean_sigma_eta > first.mean_sigma_eta + 0.1);
        assert!(last.objective > first.objective);
    }

    #[test]
    fn vae_training_improves_the_probe_elbo() {
        let mut config = tiny_vae_config(EstimatorKind::Rloo, Likelihood::Bernoulli);
        config.steps = 400;
        config.probe_every = 100;
        config.probe_reps = 20;
        let outcome = run_training(&config).unwrap();
        let first = outcome.records.first().unwrap();
        let last = outcome.records.last().unwrap();
        assert!(
            last.objective > first.objective,
            "ELBO went from {} to {}",
            first.objective,
            last.objective
        );
    }
}
