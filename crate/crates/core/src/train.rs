//! Training: seeded Nguyen–Widrow initialization and a robust
//! Levenberg–Marquardt solver, plus the evaluation metrics shared by the
//! pruning algorithms and the experiment harness.
//!
//! The solver minimizes the weighted squared error `Σ_t w_t · (y_t - ŷ_t)²`
//! over the model's active parameters. With robust mode on, the weights come
//! from a Huber-style rule on the current residuals with a MAD scale estimate;
//! they are recomputed once per outer iteration and *frozen* while that
//! iteration's step is evaluated, so each accept/reject decision compares two
//! costs under the same weights. Consequently every recorded step has
//! `after <= before`, while the sequence of `before` values across iterations
//! may wobble when reweighting changes the landscape (it is exactly monotone
//! with robust mode off).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::mlp::MlpModel;
use crate::scalar::Scalar;
use crate::stats;

/// Scale estimate used by the robust reweighting rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustScale {
    /// `s = 1.4826 · median(|r - median(r)|)` — the normal-consistent MAD.
    Mad,
}

/// Solver configuration. All fields have serde defaults, so a config file may
/// name only the ones it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Cap on accepted update steps.
    pub max_iterations: usize,
    /// Initial damping λ.
    pub damping_init: f64,
    /// Factor applied to λ after a rejected step (> 1).
    pub damping_increase: f64,
    /// Factor applied to λ after an accepted step (in (0, 1)).
    pub damping_decrease: f64,
    /// Training aborts (keeping the best parameters) once λ exceeds this.
    pub damping_max: f64,
    /// Huber-style residual reweighting on/off.
    pub robust_enabled: bool,
    /// Cutoff multiplier: residuals beyond `k · s` are downweighted.
    pub robust_k: f64,
    /// How the residual scale `s` is estimated.
    pub robust_scale: RobustScale,
    /// Stop once the relative cost decrease of an accepted step falls below
    /// this.
    pub stop_tolerance: f64,
    /// Iteration cap for the short retrains inside the pruning algorithms
    /// (trial retrains use it as-is, final retrains use ten times it).
    pub retrain_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            damping_init: 1e-2,
            damping_increase: 10.0,
            damping_decrease: 0.1,
            damping_max: 1e10,
            robust_enabled: true,
            robust_k: 2.0,
            robust_scale: RobustScale::Mad,
            stop_tolerance: 1e-10,
            retrain_iterations: 50,
        }
    }
}

impl TrainConfig {
    /// Checks every field against its documented domain.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.damping_init > 0.0 && self.damping_init.is_finite()) {
            return bad(format!("damping_init must be positive, got {}", self.damping_init));
        }
        if !(self.damping_increase > 1.0 && self.damping_increase.is_finite()) {
            return bad(format!(
                "damping_increase must exceed 1, got {}",
                self.damping_increase
            ));
        }
        if !(self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return bad(format!(
                "damping_decrease must lie in (0, 1), got {}",
                self.damping_decrease
            ));
        }
        if !(self.damping_max > self.damping_init) {
            return bad(format!(
                "damping_max must exceed damping_init, got {} vs {}",
                self.damping_max, self.damping_init
            ));
        }
        if !(self.robust_k > 0.0 && self.robust_k.is_finite()) {
            return bad(format!("robust_k must be positive, got {}", self.robust_k));
        }
        if !(self.stop_tolerance >= 0.0 && self.stop_tolerance.is_finite()) {
            return bad(format!(
                "stop_tolerance must be non-negative, got {}",
                self.stop_tolerance
            ));
        }
        Ok(())
    }

    /// Copy with a different iteration cap (used by the pruning retrains).
    pub fn with_max_iterations(&self, max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..self.clone()
        }
    }
}

/// Why the solver returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Hit `max_iterations` accepted steps.
    MaxIterations,
    /// Relative cost decrease fell below `stop_tolerance`.
    Converged,
    /// λ exceeded `damping_max` without finding an acceptable step; the last
    /// accepted parameters were kept.
    DampingOverflow,
    /// `max_iterations` was zero; the model was returned untouched.
    ZeroIterations,
}

/// One accepted solver step: weighted cost before and after, under the
/// weights frozen for that iteration (`after <= before` always).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostStep {
    pub before: f64,
    pub after: f64,
}

/// Outcome of one training run. Validation metrics are `None` when the
/// dataset has no validation rows.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub iterations_used: usize,
    /// Weighted cost after the last accepted step (initial cost if none).
    pub final_cost: f64,
    pub stop_reason: StopReason,
    pub nsse_train: f64,
    pub nsse_validation: Option<f64>,
    pub error_mean_train: f64,
    pub error_std_train: f64,
    pub error_mean_validation: Option<f64>,
    pub error_std_validation: Option<f64>,
    pub wall_time_s: f64,
    /// (before, after) weighted cost of every accepted step, in order.
    pub cost_trace: Vec<CostStep>,
}

/// Mean squared residual `Σ (y - ŷ)² / n` of a model over one split.
pub fn nsse<F: Scalar>(model: &MlpModel<F>, dataset: &Dataset<F>, split: Split) -> Result<F> {
    let r = residuals_for_split(model, dataset, split)?;
    let n = F::of(r.len() as f64);
    Ok(r.iter().map(|&e| e * e).sum::<F>() / n)
}

/// Mean and population standard deviation of the residuals `y - ŷ` over one
/// split. Note `nsse = mean² + std²` exactly, a useful cross-check.
pub fn error_stats<F: Scalar>(
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    split: Split,
) -> Result<(F, F)> {
    let r = residuals_for_split(model, dataset, split)?;
    Ok((stats::mean(&r), stats::population_std(&r)))
}

/// Per-input `(min, max)` of the standardized training inputs — the ranges
/// [`nguyen_widrow_init`] scales its hidden layer to.
pub fn input_ranges<F: Scalar>(dataset: &Dataset<F>) -> Result<Vec<(F, F)>> {
    let rows = dataset.split_indices(Split::Train);
    if rows.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let n_inputs = dataset.n_inputs();
    let x = dataset.normalized_inputs_for(&rows);
    let mut ranges = vec![(F::infinity(), F::neg_infinity()); n_inputs];
    for t in 0..rows.len() {
        for h in 0..n_inputs {
            let v = x[t * n_inputs + h];
            if v < ranges[h].0 {
                ranges[h].0 = v;
            }
            if v > ranges[h].1 {
                ranges[h].1 = v;
            }
        }
    }
    Ok(ranges)
}

fn residuals_for_split<F: Scalar>(
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    split: Split,
) -> Result<Vec<F>> {
    check_widths(model, dataset)?;
    let rows = dataset.split_indices(split);
    if rows.is_empty() {
        return Err(Error::EmptySplit(match split {
            Split::Train => "train",
            Split::Validation => "validation",
        }));
    }
    let x = dataset.normalized_inputs_for(&rows);
    let y = dataset.targets_for(&rows);
    let n_inputs = dataset.n_inputs();
    let mut hidden = vec![F::zero(); model.n_hidden()];
    let mut out = Vec::with_capacity(rows.len());
    for (k, &target) in y.iter().enumerate() {
        let row = &x[k * n_inputs..(k + 1) * n_inputs];
        out.push(target - model.forward_cached(row, &mut hidden));
    }
    Ok(out)
}

fn check_widths<F: Scalar>(model: &MlpModel<F>, dataset: &Dataset<F>) -> Result<()> {
    if model.n_inputs() != dataset.n_inputs() {
        return Err(Error::ShapeMismatch {
            context: "model input width vs dataset",
            expected: dataset.n_inputs(),
            actual: model.n_inputs(),
        });
    }
    Ok(())
}

/// Huber-style robust weights for a residual vector.
///
/// The scale is the normal-consistent MAD `s = 1.4826 · median(|r - median|)`;
/// each weight is `1` when `|r| <= k·s` and `k·s / |r|` beyond. When the MAD
/// is zero (at least half the residuals identical) every weight is 1 — there
/// is no usable scale, so nothing is downweighted.
pub fn robust_weights<F: Scalar>(residuals: &[F], k: F) -> Vec<F> {
    if residuals.is_empty() {
        return Vec::new();
    }
    let s = F::of(stats::MAD_NORMAL_CONSISTENCY) * stats::mad(residuals);
    if s <= F::zero() {
        return vec![F::one(); residuals.len()];
    }
    let cutoff = k * s;
    residuals
        .iter()
        .map(|&r| {
            let a = r.abs();
            if a <= cutoff {
                F::one()
            } else {
                cutoff / a
            }
        })
        .collect()
}

/// Seeded Nguyen–Widrow initialization.
///
/// `input_ranges` gives the `(min, max)` of each *standardized* input column
/// over the training rows; hidden-unit weight vectors are drawn as uniform
/// random directions scaled to norm `β = 0.7 · n_hidden^(1/n_inputs)` in the
/// domain where every input spans [-1, 1], then mapped through the affine
/// change of variables onto the actual ranges (the bias absorbs the range
/// midpoints). Hidden biases are U(-β, β) in the same domain; output weights
/// and bias are U(-0.1, 0.1). All randomness comes from a ChaCha8 stream
/// seeded with `seed`, and draws happen in `f64` before conversion, so the
/// draw sequence is identical for every scalar type.
pub fn nguyen_widrow_init<F: Scalar>(
    n_inputs: usize,
    n_hidden: usize,
    input_ranges: &[(F, F)],
    seed: u64,
) -> Result<MlpModel<F>> {
    use rand::{Rng, SeedableRng};
    if n_inputs == 0 || n_hidden == 0 {
        return Err(Error::InvalidConfig(format!(
            "initialization needs at least one input and one hidden unit, got {n_inputs} and {n_hidden}"
        )));
    }
    if input_ranges.len() != n_inputs {
        return Err(Error::ShapeMismatch {
            context: "input ranges",
            expected: n_inputs,
            actual: input_ranges.len(),
        });
    }
    for (c, &(lo, hi)) in input_ranges.iter().enumerate() {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "input range {c} must satisfy min < max, got ({lo}, {hi})"
            )));
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let beta = 0.7 * (n_hidden as f64).powf(1.0 / n_inputs as f64);

    let mut hidden_weights = vec![F::zero(); n_inputs * n_hidden];
    let mut hidden_biases = vec![F::zero(); n_hidden];
    for unit in 0..n_hidden {
        // Direction in the [-1, 1]-normalized domain, scaled to norm β.
        let mut dir: Vec<f64> = (0..n_inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut dir {
                *v *= beta / norm;
            }
        } else {
            // Probability-zero fallback: point along the first axis.
            dir[0] = beta;
        }
        let bias_normalized = rng.random_range(-beta..beta);

        // Affine map from t ∈ [-1, 1] to x ∈ [lo, hi]: the weight picks up a
        // factor 2/(hi - lo) and the bias absorbs the midpoint shift.
        let mut bias = bias_normalized;
        for (h, &(lo, hi)) in input_ranges.iter().enumerate() {
            let lo = lo.into_f64();
            let hi = hi.into_f64();
            let w = 2.0 * dir[h] / (hi - lo);
            hidden_weights[unit * n_inputs + h] = F::of(w);
            bias -= dir[h] * (hi + lo) / (hi - lo);
        }
        hidden_biases[unit] = F::of(bias);
    }

    let output_weights: Vec<F> = (0..n_hidden)
        .map(|_| F::of(rng.random_range(-0.1..0.1)))
        .collect();
    let output_bias = F::of(rng.random_range(-0.1..0.1));

    MlpModel::with_params(
        n_inputs,
        n_hidden,
        hidden_weights,
        hidden_biases,
        output_weights,
        output_bias,
    )
}

/// Robust Levenberg–Marquardt fit of the model's active parameters to the
/// training split.
///
/// Each outer iteration freezes the robust weights computed from the current
/// residuals, builds the weighted normal equations `(JᵀWJ + λI)δ = JᵀW·e`,
/// and retries with λ scaled up until a step strictly lowers the frozen-weight
/// cost; an accepted step scales λ down. The solver stops at
/// `max_iterations` accepted steps, when the relative cost decrease drops
/// below `stop_tolerance`, or — keeping the last accepted parameters — when λ
/// exceeds `damping_max`. With `max_iterations = 0` the input model is
/// returned unchanged.
pub fn levenberg_marquardt<F: Scalar>(
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    config: &TrainConfig,
) -> Result<(MlpModel<F>, TrainReport)> {
    config.validate()?;
    check_widths(model, dataset)?;
    let started = Instant::now();

    let rows = dataset.split_indices(Split::Train);
    if rows.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let n = rows.len();
    let n_inputs = dataset.n_inputs();
    let x = dataset.normalized_inputs_for(&rows);
    let y = dataset.targets_for(&rows);

    let layout = model.param_layout();
    let p = layout.len();
    let mut current = model.clone();
    let mut theta = current.active_params();

    let mut hidden = vec![F::zero(); model.n_hidden()];
    let mut jacobian = vec![F::zero(); n * p];
    let mut gram = vec![F::zero(); p * p];
    let mut gradient = vec![F::zero(); p];

    let residuals_of = |m: &MlpModel<F>, hidden: &mut [F]| -> Vec<F> {
        let mut r = Vec::with_capacity(n);
        for t in 0..n {
            let row = &x[t * n_inputs..(t + 1) * n_inputs];
            r.push(y[t] - m.forward_cached(row, hidden));
        }
        r
    };
    let weighted_cost = |r: &[F], w: &[F]| -> F {
        r.iter().zip(w).map(|(&e, &wt)| wt * e * e).sum()
    };

    let mut residuals = residuals_of(&current, &mut hidden);
    let mut lambda = F::of(config.damping_init);
    let lambda_max = F::of(config.damping_max);
    let mut trace: Vec<CostStep> = Vec::new();
    let mut stop_reason = if config.max_iterations == 0 {
        StopReason::ZeroIterations
    } else {
        StopReason::MaxIterations
    };
    let mut final_cost = f64::NAN;

    'outer: for iteration in 0..config.max_iterations {
        // Weights for this iteration, frozen through all λ retries below.
        let weights = if config.robust_enabled {
            robust_weights(&residuals, F::of(config.robust_k))
        } else {
            vec![F::one(); n]
        };
        let cost = weighted_cost(&residuals, &weights);
        if !cost.is_finite() {
            if iteration == 0 {
                return Err(Error::Training(format!(
                    "initial cost is not finite ({cost})"
                )));
            }
            // An accepted step always has finite cost under its own weights;
            // reweighting cannot break that (weights are in (0, 1]).
            unreachable!("non-finite cost after an accepted step");
        }
        final_cost = cost.into_f64();

        // Weighted normal equations at the current parameters.
        for t in 0..n {
            let row = &x[t * n_inputs..(t + 1) * n_inputs];
            current.jacobian_into(row, &layout, &mut hidden, &mut jacobian[t * p..(t + 1) * p]);
        }
        for v in gram.iter_mut() {
            *v = F::zero();
        }
        for v in gradient.iter_mut() {
            *v = F::zero();
        }
        for t in 0..n {
            let jr = &jacobian[t * p..(t + 1) * p];
            let wt = weights[t];
            let we = wt * residuals[t];
            for a in 0..p {
                let s = wt * jr[a];
                let ga = &mut gram[a * p + a..a * p + p];
                for (b, slot) in ga.iter_mut().enumerate() {
                    *slot += s * jr[a + b];
                }
                gradient[a] += jr[a] * we;
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[a * p + b] = gram[b * p + a];
            }
        }

        // Inner damping loop: retry with larger λ until a step helps.
        loop {
            let mut damped = gram.clone();
            for d in 0..p {
                damped[d * p + d] += lambda;
            }
            let step = cholesky_solve(&mut damped, &gradient, p);
            if let Some(delta) = step {
                let trial_theta: Vec<F> =
                    theta.iter().zip(&delta).map(|(&t, &d)| t + d).collect();
                let trial = current.with_active_params(&trial_theta)?;
                let trial_residuals = residuals_of(&trial, &mut hidden);
                let trial_cost = weighted_cost(&trial_residuals, &weights);
                if trial_cost.is_finite() && trial_cost < cost {
                    theta = trial_theta;
                    current = trial;
                    residuals = trial_residuals;
                    trace.push(CostStep {
                        before: cost.into_f64(),
                        after: trial_cost.into_f64(),
                    });
                    final_cost = trial_cost.into_f64();
                    lambda = lambda * F::of(config.damping_decrease);
                    let relative_drop = ((cost - trial_cost) / cost).into_f64();
                    if relative_drop < config.stop_tolerance || trial_cost == F::zero() {
                        stop_reason = StopReason::Converged;
                        break 'outer;
                    }
                    break;
                }
            }
            lambda = lambda * F::of(config.damping_increase);
            if lambda > lambda_max {
                stop_reason = StopReason::DampingOverflow;
                break 'outer;
            }
        }
    }

    let nsse_train = nsse(&current, dataset, Split::Train)?.into_f64();
    let (mean_train, std_train) = error_stats(&current, dataset, Split::Train)?;
    let has_validation = !dataset.split_indices(Split::Validation).is_empty();
    let (nsse_val, mean_val, std_val) = if has_validation {
        let v = nsse(&current, dataset, Split::Validation)?.into_f64();
        let (m, s) = error_stats(&current, dataset, Split::Validation)?;
        (Some(v), Some(m.into_f64()), Some(s.into_f64()))
    } else {
        (None, None, None)
    };

    if final_cost.is_nan() {
        // max_iterations == 0: report the cost of the untouched model.
        let weights = vec![F::one(); n];
        final_cost = weighted_cost(&residuals, &weights).into_f64();
    }

    let report = TrainReport {
        iterations_used: trace.len(),
        final_cost,
        stop_reason,
        nsse_train,
        nsse_validation: nsse_val,
        error_mean_train: mean_train.into_f64(),
        error_std_train: std_train.into_f64(),
        error_mean_validation: mean_val,
        error_std_validation: std_val,
        wall_time_s: started.elapsed().as_secs_f64(),
        cost_trace: trace,
    };
    Ok((current, report))
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `n × n`)
/// by in-place Cholesky factorization. Returns `None` when a pivot is
/// non-positive or non-finite — the caller treats that as "raise λ and retry".
fn cholesky_solve<F: Scalar>(a: &mut [F], b: &[F], n: usize) -> Option<Vec<F>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > F::zero()) || !diag.is_finite() {
            return None;
        }
        let root = diag.sqrt();
        a[j * n + j] = root;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / root;
        }
    }
    // Forward substitution L y = b, then back substitution Lᵀ x = y.
    let mut xv = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let l = a[i * n + k];
            xv[i] = xv[i] - l * xv[k];
        }
        xv[i] = xv[i] / a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let l = a[k * n + i];
            xv[i] = xv[i] - l * xv[k];
        }
        xv[i] = xv[i] / a[i * n + i];
    }
    Some(xv)
}
