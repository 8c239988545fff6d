//! Exhaustive-enumeration ground truth for small dimensions.
//!
//! For D latent bits there are only 2^D outcomes, so exact expectations,
//! exact gradients, and exact estimator moments are all finite sums. The
//! oracle computes them directly and gates every unbiasedness and
//! variance-ordering claim made about the estimators: an estimator run over
//! every possible sample tuple, weighted by the tuple's probability, must
//! average to the exact gradient, and its exact total variance is the
//! probability-weighted squared distance from that mean.
//!
//! The antithetic-pair estimator never sees independent tuples; its two
//! samples share one uniform per coordinate, which partitions each coordinate
//! into three intervals and the pair distribution into 3^D cells. Enumeration
//! for it walks those cells instead.
//!
//! All reductions use compensated summation so results are independent of
//! iteration order to well below the tolerances used in tests.

use rand_chacha::ChaCha8Rng;

use crate::bernoulli::{sample_batch, BinarySample, LogitVector};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorContext, EstimatorKind, GradEstimate, SampleBatch};
use crate::math::{CompensatedSum, CompensatedVecSum};
use crate::objective::{eval_at_mean, Objective};

/// Largest dimension for which 2^D outcome enumeration is attempted.
pub const MAX_ENUM_DIM: usize = 20;
/// Largest dimension for which 3^D antithetic-cell enumeration is attempted.
pub const MAX_ANTITHETIC_DIM: usize = 8;
/// Cap on (2^D)^K, the number of sample tuples visited per estimator.
const MAX_TUPLES: u128 = 1 << 24;

/// One fully evaluated outcome: the sample, its probability, the objective
/// value, the score vector, and the objective's input gradient.
#[derive(Debug, Clone)]
pub struct OutcomeRow {
    pub x: BinarySample,
    pub prob: f64,
    pub fval: f64,
    pub score: Vec<f64>,
    pub input_grad: Vec<f64>,
}

/// Exact first moments of the objective under the posterior, plus the
/// per-outcome table the estimator enumerations are built from.
#[derive(Debug, Clone)]
pub struct ExactMoments {
    /// E_q[f].
    pub ef: f64,
    /// The exact logit gradient E_q[f(x) score(x)].
    pub exact_grad: Vec<f64>,
    /// All 2^D outcomes, indexed so that row i holds the sample whose bit j
    /// equals bit j of i.
    pub per_outcome: Vec<OutcomeRow>,
}

/// Enumerate all 2^D outcomes and reduce them to exact moments.
pub fn exact_moments(eta: &LogitVector, objective: &dyn Objective) -> Result<ExactMoments> {
    let dim = eta.dim();
    if dim > MAX_ENUM_DIM {
        return Err(Error::EnumerationTooLarge { dim, max: MAX_ENUM_DIM });
    }
    assert_eq!(objective.dim(), dim, "objective dimension mismatch");
    let mu = eta.mean();
    let n = 1usize << dim;
    let mut per_outcome = Vec::with_capacity(n);
    for idx in 0..n {
        let x = BinarySample::from_index(idx, dim);
        let mut prob = 1.0;
        for (bit, &m) in x.bits().iter().zip(&mu) {
            prob *= if *bit == 1 { m } else { 1.0 - m };
        }
        let eval = objective.eval(&x.to_real());
        let score = x.bits().iter().zip(&mu).map(|(&b, &m)| f64::from(b) - m).collect();
        per_outcome.push(OutcomeRow {
            x,
            prob,
            fval: eval.value,
            score,
            input_grad: eval.input_grad,
        });
    }
    // Reductions visit rows in Gray-code order; with compensated sums the
    // order is irrelevant, this just keeps successive outcomes adjacent.
    let mut ef = CompensatedSum::new();
    let mut grad = CompensatedVecSum::new(dim);
    for i in 0..n {
        let row = &per_outcome[i ^ (i >> 1)];
        ef.add(row.prob * row.fval);
        grad.add_scaled(&row.score, row.prob * row.fval);
    }
    Ok(ExactMoments { ef: ef.value(), exact_grad: grad.value(), per_outcome })
}

/// The estimator evaluated on one enumerated tuple (or antithetic cell),
/// with the tuple's probability.
pub type WeightedEstimate = (f64, GradEstimate);

/// Evaluate `kind` on every possible sample tuple and return the full
/// probability-weighted table of (u, v) estimates. Expectations and
/// variances at any alpha are finite sums over this table.
///
/// For the antithetic-pair estimator the table covers the 3^D joint cells of
/// one shared-uniform pair and requires `k == 2`.
pub fn estimator_uv_table(
    kind: EstimatorKind,
    eta: &LogitVector,
    objective: &dyn Objective,
    k: usize,
) -> Result<Vec<WeightedEstimate>> {
    if kind == EstimatorKind::Disarm {
        if k != 2 {
            return Err(Error::InvalidArgument(format!(
                "antithetic-pair enumeration is defined for k = 2, got {k}"
            )));
        }
        return disarm_cell_table(eta, objective);
    }
    if k < kind.min_k() {
        return Err(Error::InvalidArgument(format!(
            "{kind} needs at least {} samples, got {k}",
            kind.min_k()
        )));
    }
    let dim = eta.dim();
    let n = 1u128 << dim.min(126);
    if dim > MAX_ENUM_DIM || n.saturating_pow(k as u32) > MAX_TUPLES {
        return Err(Error::EnumerationTooLarge { dim, max: MAX_ENUM_DIM });
    }

    let moments = exact_moments(eta, objective)?;
    let f_mu_eval;
    let mut ctx = EstimatorContext::default();
    if kind.needs_mean_eval() {
        f_mu_eval = eval_at_mean(objective, &eta.mean());
        ctx.mean_eval = Some(&f_mu_eval);
    }
    if kind.needs_exact_ef() {
        ctx.exact_ef = Some(moments.ef);
    }

    let n = 1usize << dim;
    let mut indices = vec![0usize; k];
    let mut table = Vec::with_capacity(n.pow(k as u32));
    loop {
        let mut prob = 1.0;
        let mut xs = Vec::with_capacity(k);
        let mut fvals = Vec::with_capacity(k);
        let mut grads = Vec::with_capacity(k);
        for &i in &indices {
            let row = &moments.per_outcome[i];
            prob *= row.prob;
            xs.push(row.x.clone());
            fvals.push(row.fval);
            grads.push(row.input_grad.clone());
        }
        let batch = SampleBatch::new(eta, xs, fvals, grads);
        table.push((prob, kind.compute(&batch, &ctx)?));

        // Odometer over base-n digits.
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(table);
            }
            indices[pos] += 1;
            if indices[pos] < n {
                break;
            }
            indices[pos] = 0;
            pos += 1;
        }
    }
}

/// Joint distribution of one antithetic pair: per coordinate the shared
/// uniform yields exactly three cells. For mu <= 1/2 the pair (x, xt) is
/// (1,0) with weight mu, (0,0) with weight 1-2mu, (0,1) with weight mu; for
/// mu > 1/2 it is (1,0) with weight 1-mu, (1,1) with weight 2mu-1, (0,1)
/// with weight 1-mu.
fn disarm_cell_table(
    eta: &LogitVector,
    objective: &dyn Objective,
) -> Result<Vec<WeightedEstimate>> {
    let dim = eta.dim();
    if dim > MAX_ANTITHETIC_DIM {
        return Err(Error::EnumerationTooLarge { dim, max: MAX_ANTITHETIC_DIM });
    }
    let moments = exact_moments(eta, objective)?;
    let mu = eta.mean();
    let cells_per_coord: Vec<[(u8, u8, f64); 3]> = mu
        .iter()
        .map(|&m| {
            if m <= 0.5 {
                [(1, 0, m), (0, 0, 1.0 - 2.0 * m), (0, 1, m)]
            } else {
                [(1, 0, 1.0 - m), (1, 1, 2.0 * m - 1.0), (0, 1, 1.0 - m)]
            }
        })
        .collect();
    let ctx = EstimatorContext::default();
    let total = 3usize.pow(dim as u32);
    let mut table = Vec::with_capacity(total);
    let mut digits = vec![0usize; dim];
    for _ in 0..total {
        let mut weight = 1.0;
        let mut x_bits = Vec::with_capacity(dim);
        let mut xt_bits = Vec::with_capacity(dim);
        for (d, &digit) in digits.iter().enumerate() {
            let (xb, xtb, w) = cells_per_coord[d][digit];
            weight *= w;
            x_bits.push(xb);
            xt_bits.push(xtb);
        }
        if weight > 0.0 {
            let xi = index_of_bits(&x_bits);
            let xti = index_of_bits(&xt_bits);
            let rx = &moments.per_outcome[xi];
            let rxt = &moments.per_outcome[xti];
            let batch = SampleBatch::new(
                eta,
                vec![rx.x.clone(), rxt.x.clone()],
                vec![rx.fval, rxt.fval],
                vec![rx.input_grad.clone(), rxt.input_grad.clone()],
            );
            table.push((weight, EstimatorKind::Disarm.compute(&batch, &ctx)?));
        }
        for digit in digits.iter_mut() {
            *digit += 1;
            if *digit < 3 {
                break;
            }
            *digit = 0;
        }
    }
    Ok(table)
}

fn index_of_bits(bits: &[u8]) -> usize {
    bits.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum()
}

/// Probability-weighted mean of the table at a given alpha.
pub fn expectation_of_table(table: &[WeightedEstimate], alpha: f64) -> Vec<f64> {
    assert!(!table.is_empty());
    let dim = table[0].1.dim();
    let mut mean = CompensatedVecSum::new(dim);
    for (prob, est) in table {
        mean.add_scaled(&est.at(alpha), *prob);
    }
    mean.value()
}

/// Exact total variance of the table at a given alpha:
/// sum over tuples of p * ||g - E g||^2.
pub fn variance_of_table(table: &[WeightedEstimate], alpha: f64) -> f64 {
    let mean = expectation_of_table(table, alpha);
    let mut var = CompensatedSum::new();
    for (prob, est) in table {
        let g = est.at(alpha);
        let sq: f64 = g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        var.add(prob * sq);
    }
    var.value()
}

/// Exact expectation of the estimator over all sample tuples. For the
/// antithetic-pair estimator `k` may be 2 or 4 (two averaged pairs share the
/// single-pair expectation).
pub fn estimator_expectation_exact(
    kind: EstimatorKind,
    eta: &LogitVector,
    objective: &dyn Objective,
    k: usize,
    alpha: f64,
) -> Result<Vec<f64>> {
    let table_k = if kind == EstimatorKind::Disarm && k == 4 { 2 } else { k };
    let table = estimator_uv_table(kind, eta, objective, table_k)?;
    Ok(expectation_of_table(&table, alpha))
}

/// Exact total variance of the estimator. Averaging two independent
/// antithetic pairs (`k = 4`) halves the single-pair variance.
pub fn estimator_variance_exact(
    kind: EstimatorKind,
    eta: &LogitVector,
    objective: &dyn Objective,
    k: usize,
    alpha: f64,
) -> Result<f64> {
    if kind == EstimatorKind::Disarm && k == 4 {
        return Ok(variance_of_table(&estimator_uv_table(kind, eta, objective, 2)?, alpha) / 2.0);
    }
    let table = estimator_uv_table(kind, eta, objective, k)?;
    Ok(variance_of_table(&table, alpha))
}

/// Monte Carlo estimate of the total variance: draw `replicates` independent
/// batches at fixed parameters, evaluate g(alpha) for each, and sum the
/// per-coordinate unbiased sample variances. Deterministic per RNG state.
///
/// `exact_ef` feeds the exact-mean baseline; when it is `None` and the
/// estimator needs one, the oracle computes it by enumeration (dimension
/// permitting). The antithetic-pair estimator supports `k = 2` (one pair)
/// and `k = 4` (two averaged pairs).
pub fn empirical_variance(
    kind: EstimatorKind,
    eta: &LogitVector,
    objective: &dyn Objective,
    k: usize,
    alpha: f64,
    exact_ef: Option<f64>,
    replicates: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if replicates < 2 {
        return Err(Error::InvalidArgument(format!(
            "variance needs at least 2 replicates, got {replicates}"
        )));
    }
    if kind == EstimatorKind::Disarm && !(k == 2 || k == 4) {
        return Err(Error::InvalidArgument(format!(
            "antithetic-pair sampling supports k = 2 or 4, got {k}"
        )));
    }
    if k < kind.min_k() {
        return Err(Error::InvalidArgument(format!(
            "{kind} needs at least {} samples, got {k}",
            kind.min_k()
        )));
    }
    let f_mu_eval;
    let mut ctx = EstimatorContext::default();
    if kind.needs_mean_eval() {
        f_mu_eval = eval_at_mean(objective, &eta.mean());
        ctx.mean_eval = Some(&f_mu_eval);
    }
    if kind.needs_exact_ef() {
        ctx.exact_ef = Some(match exact_ef {
            Some(ef) => ef,
            None => exact_moments(eta, objective)?.ef,
        });
    }

    let dim = eta.dim();
    let mut draws = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let g = if kind == EstimatorKind::Disarm && k == 4 {
            let g1 = sample_estimate(kind, eta, objective, 2, &ctx, rng)?.at(alpha);
            let g2 = sample_estimate(kind, eta, objective, 2, &ctx, rng)?.at(alpha);
            g1.iter().zip(&g2).map(|(a, b)| 0.5 * (a + b)).collect()
        } else {
            sample_estimate(kind, eta, objective, k, &ctx, rng)?.at(alpha)
        };
        draws.push(g);
    }
    let mut mean = CompensatedVecSum::new(dim);
    for g in &draws {
        mean.add_scaled(g, 1.0 / replicates as f64);
    }
    let mean = mean.value();
    let mut total = CompensatedSum::new();
    for g in &draws {
        let sq: f64 = g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        total.add(sq);
    }
    Ok(total.value() / (replicates as f64 - 1.0))
}

fn sample_estimate(
    kind: EstimatorKind,
    eta: &LogitVector,
    objective: &dyn Objective,
    k: usize,
    ctx: &EstimatorContext,
    rng: &mut ChaCha8Rng,
) -> Result<GradEstimate> {
    let xs = sample_batch(eta, rng, k, kind.antithetic())?;
    let batch = SampleBatch::evaluate(eta, xs, objective);
    kind.compute(&batch, ctx)
}

/// One named pass/fail result from [`run_gate_checks`].
#[derive(Debug, Clone)]
pub struct GateCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Compact self-check battery intended for the command line: unbiasedness of
/// every estimator against enumeration, the variance ordering of the
/// leave-one-out baseline against the exact-mean baseline with its residual
/// decomposition, the zero-variance linear case at alpha = -1, and equality
/// of the two algebraic forms of the leave-one-out contrast.
pub fn run_gate_checks() -> Vec<GateCheck> {
    use crate::objective::{Linear, ToyQuadratic};
    use rand::{Rng, SeedableRng};

    let mut rng = ChaCha8Rng::seed_from_u64(0x9a7e);
    let mut checks = Vec::new();

    // 1. Unbiasedness by enumeration, every estimator, D in {1,2}, K=2.
    let mut worst = 0.0f64;
    let mut detail = String::new();
    'outer: for dim in [1usize, 2] {
        let objective = ToyQuadratic::new(dim, 0.499);
        for _ in 0..5 {
            let eta =
                LogitVector::new((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let alpha = rng.gen_range(-1.5..1.5);
            let exact = match exact_moments(&eta, &objective) {
                Ok(m) => m.exact_grad,
                Err(e) => {
                    detail = format!("enumeration failed: {e}");
                    break 'outer;
                }
            };
            for kind in EstimatorKind::ALL {
                let a = if kind.has_control_variate() { alpha } else { 0.0 };
                match estimator_expectation_exact(kind, &eta, &objective, 2, a) {
                    Ok(mean) => {
                        for (m, e) in mean.iter().zip(&exact) {
                            let rel = (m - e).abs() / e.abs().max(1e-300);
                            worst = worst.max(rel);
                        }
                    }
                    Err(e) => {
                        detail = format!("{kind}: {e}");
                        break 'outer;
                    }
                }
            }
        }
    }
    let pass = detail.is_empty() && worst < 1e-10;
    if detail.is_empty() {
        detail = format!("max relative deviation {worst:.3e} (tolerance 1e-10)");
    }
    checks.push(GateCheck { name: "unbiasedness-by-enumeration", pass, detail });

    // 2. Exact-mean baseline never loses to leave-one-out, and the residual
    //    decomposition is exactly orthogonal.
    let mut pass = true;
    let mut detail = String::new();
    for trial in 0..20 {
        let dim = rng.gen_range(1..4);
        let objective = ToyQuadratic::new(dim, 0.499);
        let eta =
            LogitVector::new((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let k = rng.gen_range(2..4);
        let var_rloo = estimator_variance_exact(EstimatorKind::Rloo, &eta, &objective, k, 0.0);
        let var_rstar = estimator_variance_exact(EstimatorKind::RStar, &eta, &objective, k, 0.0);
        match (var_rloo, var_rstar) {
            (Ok(vl), Ok(vs)) => {
                if vl < vs - 1e-12 {
                    pass = false;
                    detail = format!("trial {trial}: loo {vl:.6e} < exact-mean {vs:.6e}");
                    break;
                }
                match residual_decomposition(&eta, &objective, k) {
                    Ok((cov, gap)) => {
                        if cov.abs() > 1e-10 || gap.abs() > 1e-10 {
                            pass = false;
                            detail = format!("trial {trial}: cov {cov:.3e}, gap {gap:.3e}");
                            break;
                        }
                    }
                    Err(e) => {
                        pass = false;
                        detail = e.to_string();
                        break;
                    }
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                pass = false;
                detail = e.to_string();
                break;
            }
        }
    }
    if detail.is_empty() {
        detail = "20 random instances ordered correctly, residual orthogonal".into();
    }
    checks.push(GateCheck { name: "baseline-variance-ordering", pass, detail });

    // 3. Linear objectives are estimated with zero variance at alpha = -1.
    let mut pass = true;
    let mut detail = String::new();
    for trial in 0..5 {
        let dim = rng.gen_range(1..5);
        let objective = Linear::new(
            (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            rng.gen_range(-1.0..1.0),
        );
        let eta =
            LogitVector::new((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        match estimator_variance_exact(
            EstimatorKind::DoubleCvMeanField,
            &eta,
            &objective,
            2,
            -1.0,
        ) {
            Ok(v) if v < 1e-20 => {}
            Ok(v) => {
                pass = false;
                detail = format!("trial {trial}: residual variance {v:.3e}");
                break;
            }
            Err(e) => {
                pass = false;
                detail = e.to_string();
                break;
            }
        }
    }
    if detail.is_empty() {
        detail = "5 random linear objectives collapse to zero variance".into();
    }
    checks.push(GateCheck { name: "linear-zero-variance", pass, detail });

    // 4. Covariance form of the leave-one-out contrast equals the pairwise
    //    form on random batches.
    let mut pass = true;
    let mut detail = String::new();
    for trial in 0..50 {
        let dim = rng.gen_range(1..5);
        let k = rng.gen_range(2..6);
        let eta =
            LogitVector::new((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let xs = sample_batch(&eta, &mut rng, k, false).unwrap();
        let fvals: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads: Vec<Vec<f64>> = (0..k).map(|_| vec![0.0; dim]).collect();
        let batch = SampleBatch::new(&eta, xs, fvals.clone(), grads);
        let fast = crate::estimators::rloo(&batch).unwrap().u;
        let mut slow = vec![0.0; dim];
        for i in 0..k {
            let others: f64 = (0..k).filter(|&j| j != i).map(|j| fvals[j]).sum();
            let w = fvals[i] - others / (k as f64 - 1.0);
            for (a, &s) in slow.iter_mut().zip(&batch.scores()[i]) {
                *a += w * s / k as f64;
            }
        }
        let dev =
            fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        if dev > 1e-14 {
            pass = false;
            detail = format!("trial {trial}: forms differ by {dev:.3e}");
            break;
        }
    }
    if detail.is_empty() {
        detail = "50 random batches agree within 1e-14".into();
    }
    checks.push(GateCheck { name: "leave-one-out-form-equality", pass, detail });

    checks
}

/// Exhaustively decompose the leave-one-out estimator as the exact-mean
/// estimator plus a residual; returns (Cov(exact-mean part, residual),
/// Var(loo) - Var(exact-mean) - Var(residual)). Both are zero in exact
/// arithmetic.
pub fn residual_decomposition(
    eta: &LogitVector,
    objective: &dyn Objective,
    k: usize,
) -> Result<(f64, f64)> {
    let rloo_table = estimator_uv_table(EstimatorKind::Rloo, eta, objective, k)?;
    let rstar_table = estimator_uv_table(EstimatorKind::RStar, eta, objective, k)?;
    assert_eq!(rloo_table.len(), rstar_table.len(), "tables enumerate the same tuples");
    let dim = eta.dim();
    let mean_rloo = expectation_of_table(&rloo_table, 0.0);
    let mean_rstar = expectation_of_table(&rstar_table, 0.0);

    let mut cov = CompensatedSum::new();
    let mut var_rloo = CompensatedSum::new();
    let mut var_rstar = CompensatedSum::new();
    let mut var_resid = CompensatedSum::new();
    for ((p_loo, loo), (p_star, star)) in rloo_table.iter().zip(&rstar_table) {
        assert_eq!(p_loo, p_star, "tuple probabilities must align");
        let g_loo = &loo.u;
        let g_star = &star.u;
        let mut c = 0.0;
        let mut vl = 0.0;
        let mut vs = 0.0;
        let mut vr = 0.0;
        for d in 0..dim {
            let star_c = g_star[d] - mean_rstar[d];
            let resid_c = (g_loo[d] - g_star[d]) - (mean_rloo[d] - mean_rstar[d]);
            let loo_c = g_loo[d] - mean_rloo[d];
            c += star_c * resid_c;
            vl += loo_c * loo_c;
            vs += star_c * star_c;
            vr += resid_c * resid_c;
        }
        cov.add(p_loo * c);
        var_rloo.add(p_loo * vl);
        var_rstar.add(p_loo * vs);
        var_resid.add(p_loo * vr);
    }
    let gap = var_rloo.value() - var_rstar.value() - var_resid.value();
    Ok((cov.value(), gap))
}
