//! Structure pruning: three algorithms that shrink a trained network, plus
//! their sequential combination.
//!
//! All three share the same statistical tool, [`variance_nullity`]: a
//! candidate quantity with per-pattern sensitivities `s_pk` is *prunable*
//! when its scaled deviation sum `Γ_k = Σ_p (s_pk - mean_k)² / σ0²` stays
//! under the lower χ² quantile at level `alpha` with `P - 1` degrees of
//! freedom **and** its mean sensitivity satisfies `|mean_k| < √σ0²`. The null
//! variance `σ0²` is `null_variance_rel` times the population variance of the
//! training targets, fixed once per pruning run.
//!
//! - [`engel_prune`] tests whole entities — inputs through `∂ŷ/∂x_h` and
//!   hidden units through `∂ŷ/∂x_i¹ = w_i²` — and removes every prunable
//!   entity each round, without retraining between rounds. (A hidden unit's
//!   output sensitivity is the same for every pattern, so its Γ is zero and
//!   the decision degenerates to the mean test `|w_i²| < σ0`.)
//! - [`engel_mod_prune`] tests individual hidden-layer weights via the
//!   per-pattern parameter Jacobian and removes exactly one weight per round
//!   (smallest Γ among the prunable; ties go to the lowest canonical index).
//! - Both end with one final retrain over ten times the configured retrain
//!   iterations — skipped when nothing was removed, so a no-op run returns
//!   the model bit-for-bit unchanged.
//! - [`n2pfa_prune`] alternates hidden-unit and input phases. Each phase
//!   trial-removes every candidate (for inputs, first absorbing the
//!   training-split mean of the standardized column into the hidden biases),
//!   retrains each trial briefly, and accepts the candidate with the best
//!   validation NSSE — provided that NSSE is within `(1 + tolerance)` of the
//!   reference, which is always the validation NSSE of the last accepted
//!   model. It stops when a full hidden+input alternation removes nothing.
//! - [`combined_pipeline`] runs `engel_mod` then `n2pfa` on its result, which
//!   hands the expensive trial-retrain stage a structure that is already
//!   small.
//!
//! Every removal is recorded as a [`TraceEvent`]; replaying a trace against
//! the starting model with [`replay_trace`] reproduces the final masks
//! exactly (parameter values are *not* replayed — retraining is not part of
//! the trace).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::mlp::{MlpModel, Param};
use crate::scalar::Scalar;
use crate::stats;
use crate::train::{error_stats, levenberg_marquardt, nsse, TrainConfig};

/// The pruning algorithms this crate implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Engel,
    EngelMod,
    N2pfa,
    Combined,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Engel,
        Algorithm::EngelMod,
        Algorithm::N2pfa,
        Algorithm::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Engel => "engel",
            Algorithm::EngelMod => "engel_mod",
            Algorithm::N2pfa => "n2pfa",
            Algorithm::Combined => "combined",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "engel" => Ok(Algorithm::Engel),
            "engel_mod" => Ok(Algorithm::EngelMod),
            "n2pfa" => Ok(Algorithm::N2pfa),
            "combined" => Ok(Algorithm::Combined),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{other}` (expected engel, engel_mod, n2pfa, or combined)"
            ))),
        }
    }
}

/// Pruning configuration. All fields have serde defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    /// Significance level of the variance-nullity test.
    pub significance_alpha: f64,
    /// `σ0²` as a fraction of the training-target population variance.
    pub null_variance_rel: f64,
    /// Relative validation-NSSE slack for accepting an n2pfa removal.
    pub n2pfa_tolerance: f64,
    /// Upper bound on pruning rounds (and on n2pfa alternations).
    pub max_rounds: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            significance_alpha: 0.05,
            null_variance_rel: 1e-4,
            n2pfa_tolerance: 0.025,
            max_rounds: 10_000,
        }
    }
}

impl PruneConfig {
    /// Strict domain check for configs arriving from the outside (CLI /
    /// config files): `alpha` in [0, 1), non-negative tolerance.
    pub fn validate(&self) -> Result<()> {
        self.validate_core()?;
        if self.significance_alpha < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "significance_alpha must be non-negative, got {}",
                self.significance_alpha
            )));
        }
        if self.n2pfa_tolerance < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "n2pfa_tolerance must be non-negative, got {}",
                self.n2pfa_tolerance
            )));
        }
        Ok(())
    }

    /// The looser check the algorithms themselves apply: degenerate levels
    /// (alpha <= 0, negative tolerance) are mathematically well-defined — they
    /// make removals impossible — and are permitted for library callers.
    fn validate_core(&self) -> Result<()> {
        if !(self.significance_alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "significance_alpha must be below 1, got {}",
                self.significance_alpha
            )));
        }
        if !(self.null_variance_rel > 0.0 && self.null_variance_rel.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "null_variance_rel must be positive, got {}",
                self.null_variance_rel
            )));
        }
        if !self.n2pfa_tolerance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "n2pfa_tolerance must be finite, got {}",
                self.n2pfa_tolerance
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidConfig("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// What one trace event removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrunedEntity {
    Input { index: usize },
    HiddenUnit { index: usize },
    Weight { unit: usize, input: usize },
}

/// One removal, in the order it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Which algorithm stage removed it (distinguishes the two stages of the
    /// combined pipeline).
    pub stage: Algorithm,
    /// 1-based round within the stage.
    pub round: usize,
    pub entity: PrunedEntity,
    /// n2pfa only: validation NSSE of the accepted trial, after its retrain.
    pub validation_nsse_after: Option<f64>,
    /// n2pfa only: the reference NSSE the acceptance was tested against.
    pub reference_nsse: Option<f64>,
}

/// Final state and history of one pruning run.
#[derive(Debug, Clone, Serialize)]
pub struct PruneReport {
    pub algorithm: Algorithm,
    /// Active inputs / hidden units / parameters after pruning.
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_params: usize,
    pub nsse_train: f64,
    pub nsse_validation: f64,
    pub error_mean_train: f64,
    pub error_std_train: f64,
    pub error_mean_validation: f64,
    pub error_std_validation: f64,
    pub wall_time_s: f64,
    /// Names of the surviving inputs, in column order.
    pub kept_inputs: Vec<String>,
    pub removal_trace: Vec<TraceEvent>,
}

/// Verdict of the variance-nullity test for one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullityVerdict<F> {
    /// `Γ_k = Σ_p (s_pk - mean_k)² / σ0²`.
    pub statistic: F,
    pub prunable: bool,
}

/// Variance-nullity test over a pattern × candidate sensitivity matrix
/// (`sensitivities` is row-major, one row per pattern).
///
/// A candidate is prunable when `Γ_k` is under the lower χ² quantile at level
/// `alpha` with `n_patterns - 1` degrees of freedom *and* `|mean_k| < √σ0²`.
/// Both comparisons are strict, so `alpha <= 0` (quantile exactly 0) can
/// never mark anything prunable.
pub fn variance_nullity<F: Scalar>(
    sensitivities: &[F],
    n_patterns: usize,
    n_candidates: usize,
    sigma0_sq: F,
    alpha: f64,
) -> Result<Vec<NullityVerdict<F>>> {
    if sensitivities.len() != n_patterns * n_candidates {
        return Err(Error::ShapeMismatch {
            context: "sensitivity matrix",
            expected: n_patterns * n_candidates,
            actual: sensitivities.len(),
        });
    }
    if n_patterns < 2 {
        return Err(Error::InvalidConfig(format!(
            "variance nullity needs at least 2 patterns, got {n_patterns}"
        )));
    }
    if !(sigma0_sq > F::zero()) || !sigma0_sq.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "null variance must be positive, got {sigma0_sq}"
        )));
    }
    let threshold: F = stats::chi_square_quantile(F::of(alpha), n_patterns - 1)?;
    let sigma0 = sigma0_sq.sqrt();
    let np = F::of(n_patterns as f64);

    let mut verdicts = Vec::with_capacity(n_candidates);
    for k in 0..n_candidates {
        let mut mean = F::zero();
        for p in 0..n_patterns {
            mean += sensitivities[p * n_candidates + k];
        }
        mean /= np;
        let mut gamma = F::zero();
        for p in 0..n_patterns {
            let d = sensitivities[p * n_candidates + k] - mean;
            gamma += d * d;
        }
        gamma /= sigma0_sq;
        verdicts.push(NullityVerdict {
            statistic: gamma,
            prunable: gamma < threshold && mean.abs() < sigma0,
        });
    }
    Ok(verdicts)
}

/// `σ0²` for a pruning run: `null_variance_rel` × population variance of the
/// training targets.
fn null_variance<F: Scalar>(dataset: &Dataset<F>, config: &PruneConfig) -> Result<F> {
    let train_rows = dataset.split_indices(Split::Train);
    if train_rows.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let targets = dataset.targets_for(&train_rows);
    let var = stats::population_variance(&targets);
    if !(var > F::zero()) {
        return Err(Error::InvalidDataset(
            "training targets are constant; the null variance would be zero".into(),
        ));
    }
    Ok(F::of(config.null_variance_rel) * var)
}

fn check_common<F: Scalar>(
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    prune: &PruneConfig,
    train: &TrainConfig,
) -> Result<()> {
    prune.validate_core()?;
    train.validate()?;
    if model.n_inputs() != dataset.n_inputs() {
        return Err(Error::ShapeMismatch {
            context: "model input width vs dataset",
            expected: dataset.n_inputs(),
            actual: model.n_inputs(),
        });
    }
    if dataset.split_indices(Split::Validation).is_empty() {
        // Every report carries validation metrics; n2pfa additionally steers
        // by them.
        return Err(Error::EmptySplit("validation"));
    }
    Ok(())
}

fn build_report<F: Scalar>(
    algorithm: Algorithm,
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    removal_trace: Vec<TraceEvent>,
    started: Instant,
) -> Result<PruneReport> {
    let nsse_train = nsse(model, dataset, Split::Train)?.into_f64();
    let nsse_validation = nsse(model, dataset, Split::Validation)?.into_f64();
    let (mean_t, std_t) = error_stats(model, dataset, Split::Train)?;
    let (mean_v, std_v) = error_stats(model, dataset, Split::Validation)?;
    let kept_inputs = dataset
        .input_names()
        .iter()
        .zip(model.input_active())
        .filter(|(_, active)| **active)
        .map(|(name, _)| name.clone())
        .collect();
    Ok(PruneReport {
        algorithm,
        n_inputs: model.n_active_inputs(),
        n_hidden: model.n_active_hidden(),
        n_params: model.count_params(),
        nsse_train,
        nsse_validation,
        error_mean_train: mean_t.into_f64(),
        error_std_train: std_t.into_f64(),
        error_mean_validation: mean_v.into_f64(),
        error_std_validation: std_v.into_f64(),
        wall_time_s: started.elapsed().as_secs_f64(),
        kept_inputs,
        removal_trace,
    })
}

/// Final retrain shared by `engel` and `engel_mod`: ten times the configured
/// retrain iterations, skipped when the trace is empty so that a run that
/// removed nothing returns its input unchanged.
fn final_retrain<F: Scalar>(
    model: MlpModel<F>,
    dataset: &Dataset<F>,
    train: &TrainConfig,
    removed_anything: bool,
) -> Result<MlpModel<F>> {
    if !removed_anything {
        return Ok(model);
    }
    let config = train.with_max_iterations(train.retrain_iterations * 10);
    let (retrained, _) = levenberg_marquardt(&model, dataset, &config)?;
    Ok(retrained)
}

/// Whole-entity pruning by sensitivity nullity, without inter-round
/// retraining (see the module docs).
pub fn engel_prune<F: Scalar>(
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    train: &TrainConfig,
    prune: &PruneConfig,
) -> Result<(MlpModel<F>, PruneReport)> {
    check_common(model, dataset, prune, train)?;
    let started = Instant::now();
    let sigma0_sq = null_variance(dataset, prune)?;

    let rows = dataset.split_indices(Split::Train);
    let x = dataset.normalized_inputs_for(&rows);
    let n = rows.len();
    let n_inputs = dataset.n_inputs();

    let mut current = model.clone();
    let mut trace: Vec<TraceEvent> = Vec::new();

    for round in 1..=prune.max_rounds {
        let inputs: Vec<usize> = (0..n_inputs).filter(|&h| current.input_active()[h]).collect();
        let hidden: Vec<usize> = (0..current.n_hidden())
            .filter(|&i| current.hidden_active()[i])
            .collect();
        let n_candidates = inputs.len() + hidden.len();
        if n_candidates == 0 {
            break;
        }

        // Pattern × candidate sensitivities: inputs first, then hidden units
        // (whose output sensitivity w² is pattern-independent).
        let hidden_sens = current.sensitivity_wrt_hidden_output();
        let mut sens = vec![F::zero(); n * n_candidates];
        for t in 0..n {
            let row = &x[t * n_inputs..(t + 1) * n_inputs];
            let s_in = current.sensitivity_wrt_input(row)?;
            for (k, &h) in inputs.iter().enumerate() {
                sens[t * n_candidates + k] = s_in[h];
            }
            for (k, &i) in hidden.iter().enumerate() {
                sens[t * n_candidates + inputs.len() + k] = hidden_sens[i];
            }
        }

        let verdicts = variance_nullity(&sens, n, n_candidates, sigma0_sq, prune.significance_alpha)?;
        let doomed_inputs: Vec<usize> = inputs
            .iter()
            .enumerate()
            .filter(|(k, _)| verdicts[*k].prunable)
            .map(|(_, &h)| h)
            .collect();
        let doomed_hidden: Vec<usize> = hidden
            .iter()
            .enumerate()
            .filter(|(k, _)| verdicts[inputs.len() + *k].prunable)
            .map(|(_, &i)| i)
            .collect();
        if doomed_inputs.is_empty() && doomed_hidden.is_empty() {
            break;
        }
        for h in doomed_inputs {
            current = current.pruned_input(h)?;
            trace.push(TraceEvent {
                stage: Algorithm::Engel,
                round,
                entity: PrunedEntity::Input { index: h },
                validation_nsse_after: None,
                reference_nsse: None,
            });
        }
        for i in doomed_hidden {
            current = current.pruned_hidden(i)?;
            trace.push(TraceEvent {
                stage: Algorithm::Engel,
                round,
                entity: PrunedEntity::HiddenUnit { index: i },
                validation_nsse_after: None,
                reference_nsse: None,
            });
        }
    }

    let removed = !trace.is_empty();
    let current = final_retrain(current, dataset, train, removed)?;
    let report = build_report(Algorithm::Engel, &current, dataset, trace, started)?;
    Ok((current, report))
}

/// Weight-by-weight pruning by Jacobian nullity: one removal per round, the
/// smallest prunable Γ first (see the module docs).
pub fn engel_mod_prune<F: Scalar>(
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    train: &TrainConfig,
    prune: &PruneConfig,
) -> Result<(MlpModel<F>, PruneReport)> {
    check_common(model, dataset, prune, train)?;
    let started = Instant::now();
    let sigma0_sq = null_variance(dataset, prune)?;

    let rows = dataset.split_indices(Split::Train);
    let x = dataset.normalized_inputs_for(&rows);
    let n = rows.len();
    let n_inputs = dataset.n_inputs();

    let mut current = model.clone();
    let mut trace: Vec<TraceEvent> = Vec::new();
    let mut hidden_buf = vec![F::zero(); current.n_hidden()];

    for round in 1..=prune.max_rounds {
        let layout = current.param_layout();
        // Candidates are the individually maskable parameters: the active
        // hidden-layer weights (biases and output weights die with their
        // unit, they cannot be masked alone).
        let weight_slots: Vec<(usize, usize, usize)> = layout
            .iter()
            .enumerate()
            .filter_map(|(k, p)| match p {
                Param::HiddenWeight { unit, input } => Some((k, *unit, *input)),
                _ => None,
            })
            .collect();
        if weight_slots.is_empty() {
            break;
        }

        let p = layout.len();
        let mut jac_row = vec![F::zero(); p];
        let mut sens = vec![F::zero(); n * weight_slots.len()];
        for t in 0..n {
            let row = &x[t * n_inputs..(t + 1) * n_inputs];
            current.jacobian_into(row, &layout, &mut hidden_buf, &mut jac_row);
            for (k, &(col, _, _)) in weight_slots.iter().enumerate() {
                sens[t * weight_slots.len() + k] = jac_row[col];
            }
        }

        let verdicts = variance_nullity(
            &sens,
            n,
            weight_slots.len(),
            sigma0_sq,
            prune.significance_alpha,
        )?;
        // Exactly one removal per round: smallest Γ among the prunable;
        // scanning in canonical order with a strict `<` makes ties fall to
        // the lowest canonical index.
        let mut best: Option<(F, usize, usize)> = None;
        for (k, verdict) in verdicts.iter().enumerate() {
            if !verdict.prunable {
                continue;
            }
            let (_, unit, input) = weight_slots[k];
            if best.map_or(true, |(s, _, _)| verdict.statistic < s) {
                best = Some((verdict.statistic, unit, input));
            }
        }
        let Some((_, unit, input)) = best else { break };
        current = current.pruned_weight(unit, input)?;
        trace.push(TraceEvent {
            stage: Algorithm::EngelMod,
            round,
            entity: PrunedEntity::Weight { unit, input },
            validation_nsse_after: None,
            reference_nsse: None,
        });
        hidden_buf.resize(current.n_hidden(), F::zero());
    }

    let removed = !trace.is_empty();
    let current = final_retrain(current, dataset, train, removed)?;
    let report = build_report(Algorithm::EngelMod, &current, dataset, trace, started)?;
    Ok((current, report))
}

/// Trial-retrain pruning steered by validation NSSE (see the module docs).
pub fn n2pfa_prune<F: Scalar>(
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    train: &TrainConfig,
    prune: &PruneConfig,
) -> Result<(MlpModel<F>, PruneReport)> {
    check_common(model, dataset, prune, train)?;
    let started = Instant::now();
    let trial_cfg = train.with_max_iterations(train.retrain_iterations);
    let acceptance_factor = 1.0 + prune.n2pfa_tolerance;

    let mut current = model.clone();
    // Reference = validation NSSE of the last accepted model.
    let mut reference = nsse(&current, dataset, Split::Validation)?.into_f64();
    let mut trace: Vec<TraceEvent> = Vec::new();

    for round in 1..=prune.max_rounds {
        let mut removed_this_round = false;

        // Hidden-unit phase.
        let candidates: Vec<usize> = (0..current.n_hidden())
            .filter(|&i| current.hidden_active()[i])
            .collect();
        let trials: Result<Vec<(usize, MlpModel<F>, f64)>> = candidates
            .par_iter()
            .map(|&i| {
                let trial = current.pruned_hidden(i)?;
                let (retrained, _) = levenberg_marquardt(&trial, dataset, &trial_cfg)?;
                let val = nsse(&retrained, dataset, Split::Validation)?.into_f64();
                Ok((i, retrained, val))
            })
            .collect();
        if let Some((i, retrained, val)) = pick_best(trials?) {
            if val <= acceptance_factor * reference {
                trace.push(TraceEvent {
                    stage: Algorithm::N2pfa,
                    round,
                    entity: PrunedEntity::HiddenUnit { index: i },
                    validation_nsse_after: Some(val),
                    reference_nsse: Some(reference),
                });
                current = retrained;
                reference = val;
                removed_this_round = true;
            }
        }

        // Input phase. Removing an input first absorbs the training-split
        // mean of its standardized column into the biases of the units it
        // feeds, so the remaining parameters start from an equivalent point.
        let candidates: Vec<usize> = (0..current.n_inputs())
            .filter(|&h| current.input_active()[h])
            .collect();
        let trials: Result<Vec<(usize, MlpModel<F>, f64)>> = candidates
            .par_iter()
            .map(|&h| {
                let mean = dataset.normalized_column_mean(h, Split::Train)?;
                let trial = current.with_bias_shift_for_input(h, mean).pruned_input(h)?;
                let (retrained, _) = levenberg_marquardt(&trial, dataset, &trial_cfg)?;
                let val = nsse(&retrained, dataset, Split::Validation)?.into_f64();
                Ok((h, retrained, val))
            })
            .collect();
        if let Some((h, retrained, val)) = pick_best(trials?) {
            if val <= acceptance_factor * reference {
                trace.push(TraceEvent {
                    stage: Algorithm::N2pfa,
                    round,
                    entity: PrunedEntity::Input { index: h },
                    validation_nsse_after: Some(val),
                    reference_nsse: Some(reference),
                });
                current = retrained;
                reference = val;
                removed_this_round = true;
            }
        }

        if !removed_this_round {
            break;
        }
    }

    let report = build_report(Algorithm::N2pfa, &current, dataset, trace, started)?;
    Ok((current, report))
}

/// Best trial by validation NSSE; ties fall to the earliest candidate (the
/// lowest index, since candidates are scanned in ascending order).
fn pick_best<F>(trials: Vec<(usize, MlpModel<F>, f64)>) -> Option<(usize, MlpModel<F>, f64)> {
    let mut best: Option<(usize, MlpModel<F>, f64)> = None;
    for t in trials {
        match &best {
            Some((_, _, val)) if !(t.2 < *val) => {}
            _ => best = Some(t),
        }
    }
    best
}

/// `engel_mod` followed by `n2pfa` on its result; the traces are
/// concatenated (the `stage` field tells them apart) and the metrics describe
/// the final model.
pub fn combined_pipeline<F: Scalar>(
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    train: &TrainConfig,
    prune: &PruneConfig,
) -> Result<(MlpModel<F>, PruneReport)> {
    let started = Instant::now();
    let (stage1, report1) = engel_mod_prune(model, dataset, train, prune)?;
    let (stage2, report2) = n2pfa_prune(&stage1, dataset, train, prune)?;
    let mut trace = report1.removal_trace;
    trace.extend(report2.removal_trace);
    let mut report = build_report(Algorithm::Combined, &stage2, dataset, trace, started)?;
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((stage2, report))
}

/// Runs the named algorithm.
pub fn run_algorithm<F: Scalar>(
    algorithm: Algorithm,
    model: &MlpModel<F>,
    dataset: &Dataset<F>,
    train: &TrainConfig,
    prune: &PruneConfig,
) -> Result<(MlpModel<F>, PruneReport)> {
    match algorithm {
        Algorithm::Engel => engel_prune(model, dataset, train, prune),
        Algorithm::EngelMod => engel_mod_prune(model, dataset, train, prune),
        Algorithm::N2pfa => n2pfa_prune(model, dataset, train, prune),
        Algorithm::Combined => combined_pipeline(model, dataset, train, prune),
    }
}

/// Applies the removals of a trace to `initial`, reproducing the final masks
/// (parameter values are not replayed).
pub fn replay_trace<F: Scalar>(
    initial: &MlpModel<F>,
    trace: &[TraceEvent],
) -> Result<MlpModel<F>> {
    let mut model = initial.clone();
    for event in trace {
        model = match event.entity {
            PrunedEntity::Input { index } => model.pruned_input(index)?,
            PrunedEntity::HiddenUnit { index } => model.pruned_hidden(index)?,
            PrunedEntity::Weight { unit, input } => model.pruned_weight(unit, input)?,
        };
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitSpec;
    use crate::train::nguyen_widrow_init;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    /// Dataset whose target is produced by `truth` on standardized inputs
    /// drawn U(-2, 2), plus optional uniform noise.
    fn dataset_from_fn(
        n: usize,
        n_inputs: usize,
        seed: u64,
        noise: f64,
        truth: impl Fn(&[f64]) -> f64,
    ) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(n * n_inputs);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..n_inputs).map(|_| rng.random_range(-2.0..2.0)).collect();
            targets.push(truth(&row) + noise * rng.random_range(-1.0..1.0));
            inputs.extend_from_slice(&row);
        }
        let split: Vec<Split> = (0..n)
            .map(|i| if i % 3 == 2 { Split::Validation } else { Split::Train })
            .collect();
        let names: Vec<String> = (0..n_inputs).map(|i| format!("x{i}")).collect();
        Dataset::new(names, "y".into(), inputs, targets, SplitSpec::Explicit(split)).unwrap()
    }

    fn quick_train() -> TrainConfig {
        TrainConfig {
            max_iterations: 150,
            retrain_iterations: 40,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("obd".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = PruneConfig::default();
        assert_eq!(c.significance_alpha, 0.05);
        assert_eq!(c.null_variance_rel, 1e-4);
        assert_eq!(c.n2pfa_tolerance, 0.025);
        c.validate().unwrap();

        assert!(PruneConfig { significance_alpha: 1.0, ..c.clone() }.validate().is_err());
        assert!(PruneConfig { significance_alpha: -0.1, ..c.clone() }.validate().is_err());
        assert!(PruneConfig { null_variance_rel: 0.0, ..c.clone() }.validate().is_err());
        assert!(PruneConfig { n2pfa_tolerance: -0.5, ..c.clone() }.validate().is_err());
        assert!(PruneConfig { max_rounds: 0, ..c.clone() }.validate().is_err());
    }

    #[test]
    fn variance_nullity_hand_fixture() {
        // One candidate, five patterns, mean exactly 0:
        // Γ = Σ s² / σ0² = 0.085 / 0.01 = 8.5 > χ²(0.05, 4) = 0.7107 → kept.
        let sens = [0.1, -0.2, 0.05, 0.15, -0.1];
        let v = variance_nullity(&sens, 5, 1, 0.01, 0.05).unwrap();
        assert_relative_eq!(v[0].statistic, 8.5, max_relative = 1e-12);
        assert!(!v[0].prunable);

        // Scaled down by 10: Γ = 0.085 < 0.7107 and |mean| = 0 < 0.1 → prunable.
        let small: Vec<f64> = sens.iter().map(|s| s * 0.1).collect();
        let v = variance_nullity(&small, 5, 1, 0.01, 0.05).unwrap();
        assert_relative_eq!(v[0].statistic, 0.085, max_relative = 1e-12);
        assert!(v[0].prunable);

        // Same small variance but a mean above σ0 = 0.1 → kept.
        let shifted: Vec<f64> = small.iter().map(|s| s + 0.5).collect();
        let v = variance_nullity(&shifted, 5, 1, 0.01, 0.05).unwrap();
        assert!(!v[0].prunable);
    }

    #[test]
    fn variance_nullity_degenerate_alpha_blocks_everything() {
        // Γ = 0 (constant column) fails the strict `< 0` comparison.
        let sens = [0.0; 6];
        for alpha in [0.0, -1.0] {
            let v = variance_nullity(&sens, 6, 1, 1.0, alpha).unwrap();
            assert_eq!(v[0].statistic, 0.0);
            assert!(!v[0].prunable);
        }
    }

    #[test]
    fn variance_nullity_rejects_degenerate_shapes() {
        assert!(variance_nullity(&[0.0, 0.0], 2, 2, 1.0, 0.05).is_err());
        assert!(variance_nullity(&[0.0], 1, 1, 1.0, 0.05).is_err());
        assert!(variance_nullity(&[0.0, 0.0], 2, 1, 0.0, 0.05).is_err());
    }

    #[test]
    fn engel_removes_an_input_feeding_only_zero_weights_in_round_one() {
        // Input 1 has an *active* weight that happens to be exactly zero, so
        // its sensitivity is identically zero across patterns.
        let truth_model =
            MlpModel::with_params(2, 1, vec![0.9, 0.0], vec![0.1], vec![5.0], 1.0).unwrap();
        let d = dataset_from_fn(120, 2, 8, 0.01, |x| {
            5.0 * (0.9 * x[0] + 0.1).tanh() + 1.0
        });
        let (pruned, report) =
            engel_prune(&truth_model, &d, &quick_train(), &PruneConfig::default()).unwrap();
        assert_eq!(pruned.input_active(), &[true, false]);
        assert!(pruned.hidden_active()[0], "the informative unit must survive");
        let first = &report.removal_trace[0];
        assert_eq!(first.round, 1);
        assert_eq!(first.entity, PrunedEntity::Input { index: 1 });
    }

    #[test]
    fn engel_prunes_hidden_units_by_their_output_weight_magnitude() {
        // Unit 1's output weight is far below σ0: the degenerate unit test
        // (pattern-constant sensitivity w²) removes it.
        let m = MlpModel::with_params(
            2,
            2,
            vec![0.9, 0.4, 0.5, -0.7],
            vec![0.1, -0.2],
            vec![5.0, 1e-9],
            1.0,
        )
        .unwrap();
        let d = dataset_from_fn(120, 2, 9, 0.01, |x| {
            5.0 * (0.9 * x[0] + 0.4 * x[1] + 0.1).tanh() + 1.0
        });
        let (pruned, _) = engel_prune(&m, &d, &quick_train(), &PruneConfig::default()).unwrap();
        assert!(!pruned.hidden_active()[1]);
        assert!(pruned.hidden_active()[0]);
    }

    #[test]
    fn engel_with_degenerate_alpha_is_the_identity() {
        let m = MlpModel::with_params(2, 2, vec![0.9, 0.4, 0.5, -0.7], vec![0.1, -0.2], vec![5.0, 0.0], 1.0)
            .unwrap();
        let d = dataset_from_fn(90, 2, 10, 0.05, |x| 4.0 * x[0] - x[1]);
        let cfg = PruneConfig {
            significance_alpha: 0.0,
            ..PruneConfig::default()
        };
        let (pruned, report) = engel_prune(&m, &d, &quick_train(), &cfg).unwrap();
        // Nothing removed — and no retrain either: bit-identical model.
        assert_eq!(pruned, m);
        assert!(report.removal_trace.is_empty());
    }

    #[test]
    fn engel_mod_removes_the_zero_jacobian_weight_first() {
        // Unit 0 has output weight 0, so all of its weight Jacobian columns
        // are identically zero (Γ = 0). The tie among them breaks to the
        // lowest canonical index: weight (0, 0).
        let m = MlpModel::with_params(
            2,
            2,
            vec![0.3, -0.8, 0.9, 0.4],
            vec![0.0, 0.1],
            vec![0.0, 5.0],
            1.0,
        )
        .unwrap();
        let d = dataset_from_fn(120, 2, 11, 0.01, |x| {
            5.0 * (0.9 * x[0] + 0.4 * x[1] + 0.1).tanh() + 1.0
        });
        let (pruned, report) =
            engel_mod_prune(&m, &d, &quick_train(), &PruneConfig::default()).unwrap();
        let first = &report.removal_trace[0];
        assert_eq!(first.entity, PrunedEntity::Weight { unit: 0, input: 0 });
        assert_eq!(first.round, 1);
        assert!(!pruned.hidden_active()[0], "the dead unit should be gone entirely");
        assert!(pruned.hidden_active()[1], "the informative unit must survive");
    }

    #[test]
    fn engel_mod_removes_exactly_one_weight_per_round() {
        let m = MlpModel::with_params(
            2,
            2,
            vec![0.3, -0.8, 0.9, 0.4],
            vec![0.0, 0.1],
            vec![0.0, 5.0],
            1.0,
        )
        .unwrap();
        let d = dataset_from_fn(120, 2, 12, 0.01, |x| {
            5.0 * (0.9 * x[0] + 0.4 * x[1] + 0.1).tanh() + 1.0
        });
        let (_, report) = engel_mod_prune(&m, &d, &quick_train(), &PruneConfig::default()).unwrap();
        for (k, event) in report.removal_trace.iter().enumerate() {
            assert_eq!(event.round, k + 1, "one removal per round, rounds dense");
            assert!(matches!(event.entity, PrunedEntity::Weight { .. }));
        }

        // max_rounds caps the number of removals.
        let capped = PruneConfig {
            max_rounds: 1,
            ..PruneConfig::default()
        };
        let (_, report) = engel_mod_prune(&m, &d, &quick_train(), &capped).unwrap();
        assert!(report.removal_trace.len() <= 1);
    }

    #[test]
    fn engel_mod_with_degenerate_alpha_is_the_identity() {
        let m = nguyen_widrow_init::<f64>(3, 4, &[(-2.0, 2.0); 3], 5).unwrap();
        let d = dataset_from_fn(60, 3, 13, 0.1, |x| x[0] - 2.0 * x[2]);
        let cfg = PruneConfig {
            significance_alpha: -1.0,
            ..PruneConfig::default()
        };
        let (pruned, report) = engel_mod_prune(&m, &d, &quick_train(), &cfg).unwrap();
        assert_eq!(pruned, m);
        assert!(report.removal_trace.is_empty());
    }

    /// A target two distinct tanh units produce exactly; removing either unit
    /// or either input makes it unfittable.
    fn two_unit_truth(x: &[f64]) -> f64 {
        200.0 * (0.9 * x[0] + 0.6 * x[1] + 0.2).tanh()
            - 150.0 * (0.7 * x[0] - 0.8 * x[1] - 0.3).tanh()
            + 600.0
    }

    fn two_unit_model() -> MlpModel<f64> {
        MlpModel::with_params(
            2,
            2,
            vec![0.9, 0.6, 0.7, -0.8],
            vec![0.2, -0.3],
            vec![200.0, -150.0],
            600.0,
        )
        .unwrap()
    }

    #[test]
    fn n2pfa_keeps_a_strictly_useful_structure_intact() {
        let d = dataset_from_fn(150, 2, 14, 0.0, two_unit_truth);
        let m = two_unit_model();
        let cfg = PruneConfig {
            n2pfa_tolerance: 0.0,
            ..PruneConfig::default()
        };
        let (pruned, report) = n2pfa_prune(&m, &d, &quick_train(), &cfg).unwrap();
        assert_eq!(pruned, m, "no removal can pass a zero-tolerance check");
        assert!(report.removal_trace.is_empty());
        assert_eq!(report.n_params, 9);
    }

    #[test]
    fn n2pfa_negative_tolerance_is_the_identity_even_on_noisy_data() {
        let d = dataset_from_fn(120, 2, 15, 5.0, two_unit_truth);
        let m = two_unit_model();
        let cfg = PruneConfig {
            n2pfa_tolerance: -1.5,
            ..PruneConfig::default()
        };
        // (1 + tolerance) < 0 makes acceptance impossible for any NSSE.
        let (pruned, report) = n2pfa_prune(&m, &d, &quick_train(), &cfg).unwrap();
        assert_eq!(pruned, m);
        assert!(report.removal_trace.is_empty());
    }

    #[test]
    fn n2pfa_drops_one_of_two_duplicated_inputs() {
        // Column 1 duplicates column 0 exactly; the target reads the shared
        // value and column 2. Either copy can go — but only one of them.
        let n = 180;
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut inputs = Vec::with_capacity(n * 3);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.random_range(-2.0..2.0);
            let c: f64 = rng.random_range(-2.0..2.0);
            inputs.extend_from_slice(&[a, a, c]);
            targets.push(80.0 * (0.8 * a + 0.5 * c).tanh() + 40.0 * (0.9 * c - 0.6 * a - 0.5).tanh());
        }
        let split: Vec<Split> = (0..n)
            .map(|i| if i % 3 == 2 { Split::Validation } else { Split::Train })
            .collect();
        let d = Dataset::new(
            names(&["a", "a_copy", "c"]),
            "y".into(),
            inputs,
            targets,
            SplitSpec::Explicit(split),
        )
        .unwrap();

        // Start from a trained 3-unit net over all three inputs.
        let ranges = vec![(-2.0, 2.0); 3];
        let init = nguyen_widrow_init::<f64>(3, 3, &ranges, 3).unwrap();
        let train_cfg = TrainConfig {
            max_iterations: 400,
            retrain_iterations: 60,
            ..TrainConfig::default()
        };
        let (trained, _) = levenberg_marquardt(&init, &d, &train_cfg).unwrap();

        let cfg = PruneConfig::default();
        let (pruned, report) = n2pfa_prune(&trained, &d, &train_cfg, &cfg).unwrap();
        let a_active = pruned.input_active()[0];
        let copy_active = pruned.input_active()[1];
        assert!(
            a_active != copy_active,
            "exactly one of the duplicated columns must survive, got {:?} (trace {:?})",
            pruned.input_active(),
            report.removal_trace
        );
        assert!(pruned.input_active()[2], "the independent input must survive");
    }

    #[test]
    fn n2pfa_trace_carries_acceptance_evidence() {
        // Oversized net on noisy two-unit data: some removals must happen,
        // and each accepted removal's recorded NSSE must satisfy the
        // acceptance inequality against its recorded reference.
        let d = dataset_from_fn(150, 2, 17, 2.0, two_unit_truth);
        let init = nguyen_widrow_init::<f64>(2, 5, &[(-2.0, 2.0); 2], 6).unwrap();
        let train_cfg = TrainConfig {
            max_iterations: 300,
            retrain_iterations: 50,
            ..TrainConfig::default()
        };
        let (trained, _) = levenberg_marquardt(&init, &d, &train_cfg).unwrap();
        let cfg = PruneConfig::default();
        let (_, report) = n2pfa_prune(&trained, &d, &train_cfg, &cfg).unwrap();
        assert!(
            !report.removal_trace.is_empty(),
            "a 5-unit net on 2-unit data should lose something"
        );
        for event in &report.removal_trace {
            let val = event.validation_nsse_after.unwrap();
            let reference = event.reference_nsse.unwrap();
            assert!(
                val <= (1.0 + cfg.n2pfa_tolerance) * reference,
                "accepted removal violates its own acceptance bound: {event:?}"
            );
        }
    }

    #[test]
    fn combined_pipeline_leaves_a_minimal_exact_model_alone() {
        let d = dataset_from_fn(150, 2, 18, 0.0, two_unit_truth);
        let m = two_unit_model();
        let cfg = PruneConfig {
            n2pfa_tolerance: 0.0,
            ..PruneConfig::default()
        };
        let (pruned, report) = combined_pipeline(&m, &d, &quick_train(), &cfg).unwrap();
        assert_eq!(pruned, m);
        assert!(report.removal_trace.is_empty());
        assert_eq!(report.algorithm, Algorithm::Combined);
    }

    #[test]
    fn combined_pipeline_never_keeps_more_than_engel_mod_alone() {
        let d = dataset_from_fn(240, 3, 19, 3.0, |x| {
            120.0 * (0.8 * x[0] + 0.5 * x[1]).tanh() - 90.0 * (0.6 * x[1] - 0.7 * x[0]).tanh()
        });
        let init = nguyen_widrow_init::<f64>(3, 5, &[(-2.0, 2.0); 3], 7).unwrap();
        let train_cfg = TrainConfig {
            max_iterations: 250,
            retrain_iterations: 40,
            ..TrainConfig::default()
        };
        let (trained, _) = levenberg_marquardt(&init, &d, &train_cfg).unwrap();
        let cfg = PruneConfig::default();
        let (_, alone) = engel_mod_prune(&trained, &d, &train_cfg, &cfg).unwrap();
        let (_, pipeline) = combined_pipeline(&trained, &d, &train_cfg, &cfg).unwrap();
        assert!(
            pipeline.n_params <= alone.n_params,
            "pipeline {} vs engel_mod alone {}",
            pipeline.n_params,
            alone.n_params
        );
        // The combined trace starts with the engel_mod stage's events.
        assert_eq!(pipeline.removal_trace[..alone.removal_trace.len()], alone.removal_trace[..]);
    }

    #[test]
    fn replaying_a_trace_reproduces_the_final_masks() {
        let d = dataset_from_fn(200, 3, 20, 2.0, |x| {
            100.0 * (0.9 * x[0] - 0.4 * x[2]).tanh() + 60.0 * (0.5 * x[0] + 0.8 * x[2]).tanh()
        });
        let init = nguyen_widrow_init::<f64>(3, 4, &[(-2.0, 2.0); 3], 9).unwrap();
        let train_cfg = TrainConfig {
            max_iterations: 250,
            retrain_iterations: 40,
            ..TrainConfig::default()
        };
        let (trained, _) = levenberg_marquardt(&init, &d, &train_cfg).unwrap();
        let (pruned, report) =
            combined_pipeline(&trained, &d, &train_cfg, &PruneConfig::default()).unwrap();

        let replayed = replay_trace(&trained, &report.removal_trace).unwrap();
        assert_eq!(replayed.input_active(), pruned.input_active());
        assert_eq!(replayed.hidden_active(), pruned.hidden_active());
        for unit in 0..pruned.n_hidden() {
            for input in 0..pruned.n_inputs() {
                assert_eq!(
                    replayed.is_weight_active(unit, input),
                    pruned.is_weight_active(unit, input),
                    "weight ({unit}, {input}) mask differs after replay"
                );
            }
        }
    }

    #[test]
    fn reports_carry_names_times_and_counts() {
        let d = dataset_from_fn(120, 2, 21, 0.5, two_unit_truth);
        let m = two_unit_model();
        let (pruned, report) =
            engel_prune(&m, &d, &quick_train(), &PruneConfig::default()).unwrap();
        assert_eq!(report.n_inputs, pruned.n_active_inputs());
        assert_eq!(report.n_hidden, pruned.n_active_hidden());
        assert_eq!(report.n_params, pruned.count_params());
        assert!(report.wall_time_s > 0.0);
        let expected_names: Vec<String> = d
            .input_names()
            .iter()
            .zip(pruned.input_active())
            .filter(|(_, a)| **a)
            .map(|(n, _)| n.clone())
            .collect();
        assert_eq!(report.kept_inputs, expected_names);
        // nsse = mean² + std² holds for the reported metrics too.
        assert_relative_eq!(
            report.nsse_validation,
            report.error_mean_validation.powi(2) + report.error_std_validation.powi(2),
            max_relative = 1e-10
        );
    }

    #[test]
    fn pruning_requires_a_validation_split() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let inputs: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = Dataset::new(
            names(&["a", "b"]),
            "y".into(),
            inputs,
            targets,
            SplitSpec::Explicit(vec![Split::Train; n]),
        )
        .unwrap();
        let m = MlpModel::<f64>::new(2, 2).unwrap();
        for algorithm in Algorithm::ALL {
            let err =
                run_algorithm(algorithm, &m, &d, &quick_train(), &PruneConfig::default())
                    .unwrap_err();
            assert!(
                matches!(err, Error::EmptySplit("validation")),
                "{algorithm}: {err}"
            );
        }
    }

    #[test]
    fn trace_events_serialize_to_tagged_json() {
        let event = TraceEvent {
            stage: Algorithm::N2pfa,
            round: 3,
            entity: PrunedEntity::Weight { unit: 1, input: 4 },
            validation_nsse_after: Some(12.5),
            reference_nsse: Some(12.0),
        };
        let json = serde_json::to_string(&event).unwrap();
        assert!(json.contains("\"stage\":\"n2pfa\""), "{json}");
        assert!(json.contains("\"kind\":\"weight\""), "{json}");
        let back: TraceEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, event);
    }
}
