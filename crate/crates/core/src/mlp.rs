//! One-hidden-layer perceptron with prunable structure.
//!
//! The network computes `ŷ = b² + Σ_i w_i² · g(b_i¹ + Σ_h w_ih⁰ · x_h)` with
//! the sigmoid `g(x) = 2 / (1 + e^(-2x)) - 1` on the hidden layer and a linear
//! output. Structure is removed by *masking*, never by deleting storage: a
//! weight mask over the hidden weight matrix plus per-input and per-hidden-unit
//! activity flags. Masked quantities are skipped during evaluation (their
//! stored values are never read), so a pruned input's column of the input
//! vector may hold anything — including NaN — without affecting the output.
//!
//! Mask invariants, maintained by every mutating operation:
//! - an inactive hidden unit has its whole weight row masked, and its bias and
//!   output weight are skipped;
//! - an inactive input has its whole weight column masked;
//! - an active hidden unit has at least one unmasked weight (removing the last
//!   one deactivates the unit), and likewise an active input has at least one
//!   unmasked weight in its column.
//!
//! The *canonical parameter order* used by [`MlpModel::active_params`],
//! [`MlpModel::jacobian_params`], and the model file format is: active hidden
//! weights in row-major order (unit index ascending, input index ascending
//! within a unit), then hidden biases of active units (ascending), then output
//! weights of active units (ascending), then the output bias. The output bias
//! is always present, so even a fully pruned model has one parameter.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hidden-layer activation `g(x) = 2 / (1 + e^(-2x)) - 1`.
///
/// Algebraically identical to `(1 - e^(-2x)) / (1 + e^(-2x))` (and to
/// `tanh(x)`); evaluated on the branch whose exponential argument is
/// non-positive so it never overflows, saturating cleanly to ±1.
pub fn activation<F: Scalar>(x: F) -> F {
    let one = F::one();
    let two = F::of(2.0);
    if x >= F::zero() {
        let e = (-two * x).exp();
        (one - e) / (one + e)
    } else {
        let e = (two * x).exp();
        -((one - e) / (one + e))
    }
}

/// Derivative of [`activation`] expressed through its output: `g'(x) = 1 - g(x)²`.
pub fn activation_derivative_from_output<F: Scalar>(g: F) -> F {
    F::one() - g * g
}

/// One coordinate of the canonical parameter enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// Hidden-layer weight `w_ih⁰` (row `unit`, column `input`).
    HiddenWeight { unit: usize, input: usize },
    /// Hidden-unit bias `b_i¹`.
    HiddenBias { unit: usize },
    /// Output-layer weight `w_i²`.
    OutputWeight { unit: usize },
    /// Output bias `b²`.
    OutputBias,
}

/// A one-hidden-layer perceptron with pruning masks.
///
/// Treat values of this type as immutable: evaluation methods take `&self`,
/// and every structural or parametric change returns a new model
/// (`with_active_params`, `pruned_input`, ...), leaving the original intact.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<F> {
    n_inputs: usize,
    n_hidden: usize,
    /// Row-major `n_hidden × n_inputs`.
    hidden_weights: Vec<F>,
    hidden_biases: Vec<F>,
    output_weights: Vec<F>,
    output_bias: F,
    /// Row-major `n_hidden × n_inputs`; `false` = weight removed.
    weight_mask: Vec<bool>,
    input_active: Vec<bool>,
    hidden_active: Vec<bool>,
}

impl<F: Scalar> MlpModel<F> {
    /// Fully connected model with all parameters zero and nothing masked.
    pub fn new(n_inputs: usize, n_hidden: usize) -> Result<Self> {
        if n_inputs == 0 || n_hidden == 0 {
            return Err(Error::InvalidConfig(format!(
                "model needs at least one input and one hidden unit, got {n_inputs} and {n_hidden}"
            )));
        }
        Ok(Self {
            n_inputs,
            n_hidden,
            hidden_weights: vec![F::zero(); n_inputs * n_hidden],
            hidden_biases: vec![F::zero(); n_hidden],
            output_weights: vec![F::zero(); n_hidden],
            output_bias: F::zero(),
            weight_mask: vec![true; n_inputs * n_hidden],
            input_active: vec![true; n_inputs],
            hidden_active: vec![true; n_hidden],
        })
    }

    /// Fully connected model with the given parameters.
    ///
    /// `hidden_weights` is row-major `n_hidden × n_inputs`.
    pub fn with_params(
        n_inputs: usize,
        n_hidden: usize,
        hidden_weights: Vec<F>,
        hidden_biases: Vec<F>,
        output_weights: Vec<F>,
        output_bias: F,
    ) -> Result<Self> {
        let mut model = Self::new(n_inputs, n_hidden)?;
        check_len("hidden_weights", &hidden_weights, n_inputs * n_hidden)?;
        check_len("hidden_biases", &hidden_biases, n_hidden)?;
        check_len("output_weights", &output_weights, n_hidden)?;
        model.hidden_weights = hidden_weights;
        model.hidden_biases = hidden_biases;
        model.output_weights = output_weights;
        model.output_bias = output_bias;
        Ok(model)
    }

    /// Model with explicit masks. The masks are canonicalized on entry: rows
    /// of inactive units and columns of inactive inputs are masked, and units
    /// or inputs left without a single active weight are deactivated, applied
    /// to a fixed point.
    #[allow(clippy::too_many_arguments)]
    pub fn with_masks(
        n_inputs: usize,
        n_hidden: usize,
        hidden_weights: Vec<F>,
        hidden_biases: Vec<F>,
        output_weights: Vec<F>,
        output_bias: F,
        weight_mask: Vec<bool>,
        input_active: Vec<bool>,
        hidden_active: Vec<bool>,
    ) -> Result<Self> {
        let mut model = Self::with_params(
            n_inputs,
            n_hidden,
            hidden_weights,
            hidden_biases,
            output_weights,
            output_bias,
        )?;
        check_len("weight_mask", &weight_mask, n_inputs * n_hidden)?;
        check_len("input_active", &input_active, n_inputs)?;
        check_len("hidden_active", &hidden_active, n_hidden)?;
        model.weight_mask = weight_mask;
        model.input_active = input_active;
        model.hidden_active = hidden_active;
        model.normalize_masks();
        Ok(model)
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn input_active(&self) -> &[bool] {
        &self.input_active
    }

    pub fn hidden_active(&self) -> &[bool] {
        &self.hidden_active
    }

    /// Whether the weight `w_ih⁰` is unmasked.
    pub fn is_weight_active(&self, unit: usize, input: usize) -> bool {
        self.weight_mask[self.windex(unit, input)]
    }

    /// Number of active (unmasked) inputs.
    pub fn n_active_inputs(&self) -> usize {
        self.input_active.iter().filter(|a| **a).count()
    }

    /// Number of active hidden units.
    pub fn n_active_hidden(&self) -> usize {
        self.hidden_active.iter().filter(|a| **a).count()
    }

    fn windex(&self, unit: usize, input: usize) -> usize {
        debug_assert!(unit < self.n_hidden && input < self.n_inputs);
        unit * self.n_inputs + input
    }

    /// Network output for one input row (length `n_inputs`; entries at
    /// inactive positions are skipped, never read).
    pub fn forward(&self, x: &[F]) -> Result<F> {
        if x.len() != self.n_inputs {
            return Err(Error::ShapeMismatch {
                context: "forward input row",
                expected: self.n_inputs,
                actual: x.len(),
            });
        }
        let mut hidden = vec![F::zero(); self.n_hidden];
        Ok(self.forward_cached(x, &mut hidden))
    }

    /// Forward pass that also exposes the hidden activations `g(z_i)` (zero at
    /// inactive units). Shape of `x` and `hidden` is the caller's contract;
    /// this is the allocation-free core used by the training loops.
    pub(crate) fn forward_cached(&self, x: &[F], hidden: &mut [F]) -> F {
        debug_assert_eq!(x.len(), self.n_inputs);
        debug_assert_eq!(hidden.len(), self.n_hidden);
        let mut out = self.output_bias;
        for i in 0..self.n_hidden {
            if !self.hidden_active[i] {
                hidden[i] = F::zero();
                continue;
            }
            let row = i * self.n_inputs;
            let mut z = self.hidden_biases[i];
            for h in 0..self.n_inputs {
                if self.weight_mask[row + h] {
                    z += self.hidden_weights[row + h] * x[h];
                }
            }
            let g = activation(z);
            hidden[i] = g;
            out += self.output_weights[i] * g;
        }
        out
    }

    /// Number of active parameters: unmasked hidden weights, plus bias and
    /// output weight per active unit, plus the output bias (always counted).
    pub fn count_params(&self) -> usize {
        let weights = self.weight_mask.iter().filter(|m| **m).count();
        weights + 2 * self.n_active_hidden() + 1
    }

    /// Canonical parameter enumeration (see the module docs for the order).
    pub fn param_layout(&self) -> Vec<Param> {
        let mut layout = Vec::with_capacity(self.count_params());
        for unit in 0..self.n_hidden {
            if !self.hidden_active[unit] {
                continue;
            }
            for input in 0..self.n_inputs {
                if self.weight_mask[self.windex(unit, input)] {
                    layout.push(Param::HiddenWeight { unit, input });
                }
            }
        }
        for unit in 0..self.n_hidden {
            if self.hidden_active[unit] {
                layout.push(Param::HiddenBias { unit });
            }
        }
        for unit in 0..self.n_hidden {
            if self.hidden_active[unit] {
                layout.push(Param::OutputWeight { unit });
            }
        }
        layout.push(Param::OutputBias);
        layout
    }

    /// Active parameters in canonical order.
    pub fn active_params(&self) -> Vec<F> {
        let layout = self.param_layout();
        let mut out = Vec::with_capacity(layout.len());
        for p in layout {
            out.push(match p {
                Param::HiddenWeight { unit, input } => self.hidden_weights[self.windex(unit, input)],
                Param::HiddenBias { unit } => self.hidden_biases[unit],
                Param::OutputWeight { unit } => self.output_weights[unit],
                Param::OutputBias => self.output_bias,
            });
        }
        out
    }

    /// Copy of this model with the active parameters replaced by `params`
    /// (canonical order; length must equal [`MlpModel::count_params`]).
    pub fn with_active_params(&self, params: &[F]) -> Result<Self> {
        if params.len() != self.count_params() {
            return Err(Error::ShapeMismatch {
                context: "active parameter vector",
                expected: self.count_params(),
                actual: params.len(),
            });
        }
        let mut model = self.clone();
        for (p, &v) in model.param_layout().iter().zip(params) {
            match *p {
                Param::HiddenWeight { unit, input } => {
                    let w = model.windex(unit, input);
                    model.hidden_weights[w] = v;
                }
                Param::HiddenBias { unit } => model.hidden_biases[unit] = v,
                Param::OutputWeight { unit } => model.output_weights[unit] = v,
                Param::OutputBias => model.output_bias = v,
            }
        }
        Ok(model)
    }

    /// Partial derivatives of the output with respect to every active
    /// parameter, in canonical order.
    pub fn jacobian_params(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.n_inputs {
            return Err(Error::ShapeMismatch {
                context: "jacobian input row",
                expected: self.n_inputs,
                actual: x.len(),
            });
        }
        let layout = self.param_layout();
        let mut hidden = vec![F::zero(); self.n_hidden];
        let mut out = vec![F::zero(); layout.len()];
        self.jacobian_into(x, &layout, &mut hidden, &mut out);
        Ok(out)
    }

    /// Allocation-free core of [`MlpModel::jacobian_params`]; `row` receives
    /// one derivative per layout entry.
    pub(crate) fn jacobian_into(
        &self,
        x: &[F],
        layout: &[Param],
        hidden: &mut [F],
        row: &mut [F],
    ) {
        debug_assert_eq!(row.len(), layout.len());
        self.forward_cached(x, hidden);
        for (slot, p) in row.iter_mut().zip(layout) {
            *slot = match *p {
                Param::HiddenWeight { unit, input } => {
                    self.output_weights[unit]
                        * activation_derivative_from_output(hidden[unit])
                        * x[input]
                }
                Param::HiddenBias { unit } => {
                    self.output_weights[unit] * activation_derivative_from_output(hidden[unit])
                }
                Param::OutputWeight { unit } => hidden[unit],
                Param::OutputBias => F::one(),
            };
        }
    }

    /// Partial derivatives of the output with respect to every *input*,
    /// `∂ŷ/∂x_h = Σ_i w_i² · g'(z_i) · w_ih⁰` over unmasked weights. Entries at
    /// inactive inputs are zero.
    pub fn sensitivity_wrt_input(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.n_inputs {
            return Err(Error::ShapeMismatch {
                context: "sensitivity input row",
                expected: self.n_inputs,
                actual: x.len(),
            });
        }
        let mut hidden = vec![F::zero(); self.n_hidden];
        self.forward_cached(x, &mut hidden);
        let mut sens = vec![F::zero(); self.n_inputs];
        for i in 0..self.n_hidden {
            if !self.hidden_active[i] {
                continue;
            }
            let row = i * self.n_inputs;
            let d = self.output_weights[i] * activation_derivative_from_output(hidden[i]);
            for h in 0..self.n_inputs {
                if self.weight_mask[row + h] {
                    sens[h] += d * self.hidden_weights[row + h];
                }
            }
        }
        Ok(sens)
    }

    /// Partial derivative of the output with respect to each hidden unit's
    /// *output* `x_i¹`: simply `w_i²`, the same for every input pattern.
    /// Entries at inactive units are zero.
    pub fn sensitivity_wrt_hidden_output(&self) -> Vec<F> {
        let mut sens = vec![F::zero(); self.n_hidden];
        for i in 0..self.n_hidden {
            if self.hidden_active[i] {
                sens[i] = self.output_weights[i];
            }
        }
        sens
    }

    /// Copy with input `input` deactivated (column masked). Cascades: hidden
    /// units left without any active weight are deactivated too. Pruning an
    /// already-inactive input is a no-op, which makes removal traces safely
    /// replayable.
    pub fn pruned_input(&self, input: usize) -> Result<Self> {
        if input >= self.n_inputs {
            return Err(Error::ShapeMismatch {
                context: "pruned input index",
                expected: self.n_inputs,
                actual: input,
            });
        }
        let mut model = self.clone();
        model.input_active[input] = false;
        model.normalize_masks();
        Ok(model)
    }

    /// Copy with hidden unit `unit` deactivated (row masked, bias and output
    /// weight skipped). Cascades: inputs left without any active weight are
    /// deactivated too. No-op if the unit is already inactive.
    pub fn pruned_hidden(&self, unit: usize) -> Result<Self> {
        if unit >= self.n_hidden {
            return Err(Error::ShapeMismatch {
                context: "pruned hidden unit index",
                expected: self.n_hidden,
                actual: unit,
            });
        }
        let mut model = self.clone();
        model.hidden_active[unit] = false;
        model.normalize_masks();
        Ok(model)
    }

    /// Copy with the single weight `w_ih⁰` masked. Cascades: a unit losing its
    /// last weight is deactivated (with its bias and output weight), and an
    /// input whose column empties is deactivated. No-op on an already-masked
    /// weight.
    pub fn pruned_weight(&self, unit: usize, input: usize) -> Result<Self> {
        if unit >= self.n_hidden {
            return Err(Error::ShapeMismatch {
                context: "pruned weight unit index",
                expected: self.n_hidden,
                actual: unit,
            });
        }
        if input >= self.n_inputs {
            return Err(Error::ShapeMismatch {
                context: "pruned weight input index",
                expected: self.n_inputs,
                actual: input,
            });
        }
        let mut model = self.clone();
        let w = model.windex(unit, input);
        model.weight_mask[w] = false;
        model.normalize_masks();
        Ok(model)
    }

    /// Copy with `delta` added to the bias of every active hidden unit whose
    /// weight on `input` is active — used to absorb the mean of an input that
    /// is about to be removed.
    pub(crate) fn with_bias_shift_for_input(&self, input: usize, mean: F) -> Self {
        let mut model = self.clone();
        for unit in 0..self.n_hidden {
            if !self.hidden_active[unit] {
                continue;
            }
            let w = self.windex(unit, input);
            if self.weight_mask[w] {
                model.hidden_biases[unit] += self.hidden_weights[w] * mean;
            }
        }
        model
    }

    /// Drives the masks to their canonical fixed point: inactive rows/columns
    /// fully masked, entities without a single active weight deactivated.
    fn normalize_masks(&mut self) {
        loop {
            let mut changed = false;
            for unit in 0..self.n_hidden {
                let row = unit * self.n_inputs;
                let any = self.weight_mask[row..row + self.n_inputs].iter().any(|m| *m);
                if self.hidden_active[unit] && !any {
                    self.hidden_active[unit] = false;
                    changed = true;
                }
                if !self.hidden_active[unit] && any {
                    for m in &mut self.weight_mask[row..row + self.n_inputs] {
                        *m = false;
                    }
                    changed = true;
                }
            }
            for input in 0..self.n_inputs {
                let mut any = false;
                for unit in 0..self.n_hidden {
                    any |= self.weight_mask[unit * self.n_inputs + input];
                }
                if self.input_active[input] && !any {
                    self.input_active[input] = false;
                    changed = true;
                }
                if !self.input_active[input] && any {
                    for unit in 0..self.n_hidden {
                        self.weight_mask[unit * self.n_inputs + input] = false;
                    }
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Checks the mask invariants; all mutating operations preserve them, so a
    /// failure means a bug (or a hand-built state fed around `with_masks`).
    pub fn validate_masks(&self) -> Result<()> {
        for unit in 0..self.n_hidden {
            let row = unit * self.n_inputs;
            let any = self.weight_mask[row..row + self.n_inputs].iter().any(|m| *m);
            if self.hidden_active[unit] && !any {
                return Err(Error::InvalidConfig(format!(
                    "hidden unit {unit} is active but has no active weights"
                )));
            }
            if !self.hidden_active[unit] && any {
                return Err(Error::InvalidConfig(format!(
                    "hidden unit {unit} is inactive but has active weights"
                )));
            }
        }
        for input in 0..self.n_inputs {
            let mut any = false;
            for unit in 0..self.n_hidden {
                any |= self.weight_mask[unit * self.n_inputs + input];
            }
            if self.input_active[input] && !any {
                return Err(Error::InvalidConfig(format!(
                    "input {input} is active but has no active weights"
                )));
            }
            if !self.input_active[input] && any {
                return Err(Error::InvalidConfig(format!(
                    "input {input} is inactive but has active weights"
                )));
            }
        }
        Ok(())
    }

    /// Structurally removes masked rows and columns, returning the dense model
    /// plus the original indices of the kept inputs and hidden units (both
    /// ascending). Fails if no input or no hidden unit is left. The compacted
    /// model computes the same function of the kept inputs.
    pub fn compact(&self) -> Result<(Self, Vec<usize>, Vec<usize>)> {
        let kept_inputs: Vec<usize> = (0..self.n_inputs).filter(|h| self.input_active[*h]).collect();
        let kept_hidden: Vec<usize> = (0..self.n_hidden).filter(|i| self.hidden_active[*i]).collect();
        if kept_inputs.is_empty() || kept_hidden.is_empty() {
            return Err(Error::InvalidConfig(
                "cannot compact a model with no active inputs or no active hidden units".into(),
            ));
        }
        let mut weights = Vec::with_capacity(kept_hidden.len() * kept_inputs.len());
        let mut mask = Vec::with_capacity(kept_hidden.len() * kept_inputs.len());
        for &unit in &kept_hidden {
            for &input in &kept_inputs {
                let w = self.windex(unit, input);
                weights.push(self.hidden_weights[w]);
                mask.push(self.weight_mask[w]);
            }
        }
        let model = Self::with_masks(
            kept_inputs.len(),
            kept_hidden.len(),
            weights,
            kept_hidden.iter().map(|&i| self.hidden_biases[i]).collect(),
            kept_hidden.iter().map(|&i| self.output_weights[i]).collect(),
            self.output_bias,
            mask,
            vec![true; kept_inputs.len()],
            vec![true; kept_hidden.len()],
        )?;
        Ok((model, kept_inputs, kept_hidden))
    }

    /// Serializes the model into the versioned text format (see module docs of
    /// the crate and the README; full arrays are written, including masked
    /// entries, so the representation round-trips bit-for-bit).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(HEADER);
        s.push('\n');
        s.push_str(&format!("n_inputs {}\n", self.n_inputs));
        s.push_str(&format!("n_hidden {}\n", self.n_hidden));
        push_floats(&mut s, "hidden_weights", &self.hidden_weights);
        push_floats(&mut s, "hidden_biases", &self.hidden_biases);
        push_floats(&mut s, "output_weights", &self.output_weights);
        push_floats(&mut s, "output_bias", std::slice::from_ref(&self.output_bias));
        push_bools(&mut s, "weight_mask", &self.weight_mask);
        push_bools(&mut s, "input_active", &self.input_active);
        push_bools(&mut s, "hidden_active", &self.hidden_active);
        s
    }

    /// Parses the text format produced by [`MlpModel::to_text`]. Fields are
    /// required in their documented order; masks must already satisfy the
    /// invariants (files are rejected rather than silently repaired).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::ModelFormat("empty file".into()))?;
        if header.trim_end() != HEADER {
            return Err(Error::ModelFormat(format!(
                "unsupported header `{header}` (expected `{HEADER}`)"
            )));
        }
        let n_inputs = parse_dim(lines.next(), "n_inputs")?;
        let n_hidden = parse_dim(lines.next(), "n_hidden")?;
        let hidden_weights = parse_floats(lines.next(), "hidden_weights", n_inputs * n_hidden)?;
        let hidden_biases = parse_floats(lines.next(), "hidden_biases", n_hidden)?;
        let output_weights = parse_floats(lines.next(), "output_weights", n_hidden)?;
        let output_bias = parse_floats(lines.next(), "output_bias", 1)?[0];
        let weight_mask = parse_bools(lines.next(), "weight_mask", n_inputs * n_hidden)?;
        let input_active = parse_bools(lines.next(), "input_active", n_inputs)?;
        let hidden_active = parse_bools(lines.next(), "hidden_active", n_hidden)?;
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(Error::ModelFormat(format!(
                "unexpected trailing content: `{extra}`"
            )));
        }

        let model = MlpModel {
            n_inputs,
            n_hidden,
            hidden_weights,
            hidden_biases,
            output_weights,
            output_bias,
            weight_mask,
            input_active,
            hidden_active,
        };
        if n_inputs == 0 || n_hidden == 0 {
            return Err(Error::ModelFormat(
                "model dimensions must both be at least 1".into(),
            ));
        }
        model
            .validate_masks()
            .map_err(|e| Error::ModelFormat(format!("mask inconsistency: {e}")))?;
        Ok(model)
    }

    /// Writes the text format to `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Reads the text format from `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

const HEADER: &str = "trimnet model v1";

fn check_len<T>(name: &'static str, v: &[T], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::ShapeMismatch {
            context: name,
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

fn push_floats<F: Scalar>(s: &mut String, name: &str, values: &[F]) {
    s.push_str(name);
    for v in values {
        s.push(' ');
        s.push_str(&format!("{v}"));
    }
    s.push('\n');
}

fn push_bools(s: &mut String, name: &str, values: &[bool]) {
    s.push_str(name);
    for v in values {
        s.push(' ');
        s.push(if *v { '1' } else { '0' });
    }
    s.push('\n');
}

fn field_tokens<'a>(line: Option<&'a str>, name: &str) -> Result<Vec<&'a str>> {
    let line = line.ok_or_else(|| Error::ModelFormat(format!("missing field `{name}`")))?;
    let mut tokens = line.split_whitespace();
    match tokens.next() {
        Some(first) if first == name => Ok(tokens.collect()),
        Some(first) => Err(Error::ModelFormat(format!(
            "expected field `{name}`, found `{first}`"
        ))),
        None => Err(Error::ModelFormat(format!(
            "expected field `{name}`, found an empty line"
        ))),
    }
}

fn parse_dim(line: Option<&str>, name: &str) -> Result<usize> {
    let tokens = field_tokens(line, name)?;
    if tokens.len() != 1 {
        return Err(Error::ModelFormat(format!(
            "field `{name}` must hold exactly one value, found {}",
            tokens.len()
        )));
    }
    tokens[0]
        .parse()
        .map_err(|_| Error::ModelFormat(format!("field `{name}`: `{}` is not a count", tokens[0])))
}

fn parse_floats<F: Scalar>(line: Option<&str>, name: &str, expected: usize) -> Result<Vec<F>> {
    let tokens = field_tokens(line, name)?;
    if tokens.len() != expected {
        return Err(Error::ModelFormat(format!(
            "field `{name}` must hold {expected} values, found {}",
            tokens.len()
        )));
    }
    let mut out = Vec::with_capacity(expected);
    for t in tokens {
        let v = t
            .parse::<F>()
            .map_err(|_| Error::ModelFormat(format!("field `{name}`: `{t}` is not a number")))?;
        out.push(v);
    }
    Ok(out)
}

fn parse_bools(line: Option<&str>, name: &str, expected: usize) -> Result<Vec<bool>> {
    let tokens = field_tokens(line, name)?;
    if tokens.len() != expected {
        return Err(Error::ModelFormat(format!(
            "field `{name}` must hold {expected} values, found {}",
            tokens.len()
        )));
    }
    let mut out = Vec::with_capacity(expected);
    for t in tokens {
        match t {
            "1" => out.push(true),
            "0" => out.push(false),
            other => {
                return Err(Error::ModelFormat(format!(
                    "field `{name}`: `{other}` is not a mask bit (0 or 1)"
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Deterministic small model with non-trivial parameters.
    fn sample_model(n_inputs: usize, n_hidden: usize, seed: u64) -> MlpModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let hw = draw(n_inputs * n_hidden);
        let hb = draw(n_hidden);
        let ow = draw(n_hidden);
        MlpModel::with_params(n_inputs, n_hidden, hw, hb, ow, 0.3).unwrap()
    }

    #[test]
    fn activation_matches_both_published_forms_and_tanh() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.2, 1.0, 4.5] {
            let direct = 2.0 / (1.0 + (-2.0 * x).exp()) - 1.0;
            let ratio = (1.0 - (-2.0 * x).exp()) / (1.0 + (-2.0 * x).exp());
            assert_relative_eq!(activation(x), direct, max_relative = 1e-14);
            assert_relative_eq!(activation(x), ratio, max_relative = 1e-14);
            assert_relative_eq!(activation(x), x.tanh(), max_relative = 1e-14);
        }
        assert_eq!(activation(1.0f64), 0.7615941559557649);
    }

    #[test]
    fn activation_saturates_without_overflow() {
        assert_eq!(activation(700.0f64), 1.0);
        assert_eq!(activation(-700.0f64), -1.0);
        assert_eq!(activation(f64::INFINITY), 1.0);
        assert_eq!(activation(f64::NEG_INFINITY), -1.0);
    }

    #[test]
    fn activation_is_exactly_antisymmetric() {
        for &x in &[0.0f64, 1e-8, 0.3, 2.0, 50.0, 1000.0] {
            assert_eq!(activation(-x), -activation(x));
        }
    }

    #[test]
    fn activation_derivative_identity() {
        for &x in &[-2.0f64, -0.1, 0.0, 0.4, 3.0] {
            let g = activation(x);
            // g' = 1 - g² checked against a central finite difference.
            let fd = (activation(x + 1e-6) - activation(x - 1e-6)) / 2e-6;
            assert_relative_eq!(activation_derivative_from_output(g), fd, max_relative = 1e-8);
        }
    }

    #[test]
    fn forward_matches_hand_computation() {
        // 2 inputs, 2 hidden units, all weights explicit.
        let m = MlpModel::with_params(
            2,
            2,
            vec![0.5, -1.0, 0.25, 0.75],
            vec![0.1, -0.2],
            vec![2.0, -3.0],
            0.5,
        )
        .unwrap();
        let x = [1.0, 2.0];
        let z0: f64 = 0.5 * 1.0 + (-1.0) * 2.0 + 0.1;
        let z1: f64 = 0.25 * 1.0 + 0.75 * 2.0 - 0.2;
        let expected = 2.0 * z0.tanh() - 3.0 * z1.tanh() + 0.5;
        assert_relative_eq!(m.forward(&x).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = sample_model(3, 2, 1);
        let err = m.forward(&[1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("expected 3, got 2"), "{err}");
    }

    #[test]
    fn masked_input_is_skipped_not_multiplied() {
        let m = sample_model(4, 3, 7).pruned_input(2).unwrap();
        let x_clean = [0.3, -0.8, 0.0, 0.9];
        let mut x_nan = x_clean;
        x_nan[2] = f64::NAN;
        // NaN at a pruned position must not poison the output: bit-identical.
        let a = m.forward(&x_clean).unwrap();
        let b = m.forward(&x_nan).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn count_params_anchors() {
        assert_eq!(MlpModel::<f64>::new(10, 25).unwrap().count_params(), 301);
        assert_eq!(MlpModel::<f64>::new(10, 2).unwrap().count_params(), 25);
        assert_eq!(MlpModel::<f64>::new(8, 2).unwrap().count_params(), 21);
        // Everything pruned: only the output bias remains.
        let mut m = MlpModel::<f64>::new(3, 2).unwrap();
        for u in 0..2 {
            m = m.pruned_hidden(u).unwrap();
        }
        assert_eq!(m.count_params(), 1);
        assert_eq!(m.n_active_inputs(), 0);
    }

    #[test]
    fn canonical_order_skips_pruned_unit_entirely() {
        let m = sample_model(3, 3, 11).pruned_hidden(1).unwrap();
        let layout = m.param_layout();
        for p in &layout {
            let touches_unit_1 = matches!(
                p,
                Param::HiddenWeight { unit: 1, .. }
                    | Param::HiddenBias { unit: 1 }
                    | Param::OutputWeight { unit: 1 }
            );
            assert!(!touches_unit_1, "layout must skip the pruned unit: {p:?}");
        }
        // Row-major weights, then biases, then output weights, then bias.
        assert_eq!(
            layout,
            vec![
                Param::HiddenWeight { unit: 0, input: 0 },
                Param::HiddenWeight { unit: 0, input: 1 },
                Param::HiddenWeight { unit: 0, input: 2 },
                Param::HiddenWeight { unit: 2, input: 0 },
                Param::HiddenWeight { unit: 2, input: 1 },
                Param::HiddenWeight { unit: 2, input: 2 },
                Param::HiddenBias { unit: 0 },
                Param::HiddenBias { unit: 2 },
                Param::OutputWeight { unit: 0 },
                Param::OutputWeight { unit: 2 },
                Param::OutputBias,
            ]
        );
    }

    #[test]
    fn active_params_round_trip_through_with_active_params() {
        let m = sample_model(4, 3, 3).pruned_weight(0, 1).unwrap();
        let params = m.active_params();
        assert_eq!(params.len(), m.count_params());
        let mut bumped = params.clone();
        for v in &mut bumped {
            *v += 0.125;
        }
        let m2 = m.with_active_params(&bumped).unwrap();
        assert_eq!(m2.active_params(), bumped);
        // Masks unchanged by a parameter update.
        assert_eq!(m2.input_active(), m.input_active());
        assert_eq!(m2.hidden_active(), m.hidden_active());
        // Wrong length rejected.
        assert!(m.with_active_params(&params[1..]).is_err());
    }

    #[test]
    fn jacobian_agrees_with_finite_differences() {
        let m = sample_model(5, 4, 21)
            .pruned_weight(1, 3)
            .unwrap()
            .pruned_hidden(2)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let jac = m.jacobian_params(&x).unwrap();
            let params = m.active_params();
            for k in 0..params.len() {
                let h = 1e-6 * (1.0 + params[k].abs());
                let mut up = params.clone();
                up[k] += h;
                let mut down = params.clone();
                down[k] -= h;
                let fd = (m.with_active_params(&up).unwrap().forward(&x).unwrap()
                    - m.with_active_params(&down).unwrap().forward(&x).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(jac[k], fd, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn input_sensitivity_agrees_with_finite_differences() {
        let m = sample_model(5, 3, 33).pruned_input(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sens = m.sensitivity_wrt_input(&x).unwrap();
            for h in 0..5 {
                let mut up = x.clone();
                up[h] += 1e-6;
                let mut down = x.clone();
                down[h] -= 1e-6;
                let fd = (m.forward(&up).unwrap() - m.forward(&down).unwrap()) / 2e-6;
                if h == 4 {
                    assert_eq!(sens[h], 0.0, "pruned input must report zero sensitivity");
                } else {
                    assert_relative_eq!(sens[h], fd, max_relative = 1e-5, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn hidden_output_sensitivity_is_the_output_weight() {
        let m = sample_model(3, 3, 8).pruned_hidden(1).unwrap();
        let sens = m.sensitivity_wrt_hidden_output();
        assert_eq!(sens.len(), 3);
        assert_eq!(sens[1], 0.0);
        let layout = m.param_layout();
        let params = m.active_params();
        for (p, v) in layout.iter().zip(&params) {
            if let Param::OutputWeight { unit } = p {
                assert_eq!(sens[*unit], *v);
            }
        }
    }

    #[test]
    fn pruning_last_weight_kills_the_whole_unit() {
        // Single unit on a single input: 4 parameters. Removing the one weight
        // must cascade to the unit (bias + output weight) and the input.
        let m = MlpModel::with_params(1, 1, vec![0.9], vec![0.2], vec![1.5], 0.1).unwrap();
        assert_eq!(m.count_params(), 4);
        let pruned = m.pruned_weight(0, 0).unwrap();
        assert_eq!(pruned.count_params(), 1);
        assert_eq!(pruned.hidden_active(), &[false]);
        assert_eq!(pruned.input_active(), &[false]);
        // Output of the fully pruned model is just the output bias.
        assert_eq!(pruned.forward(&[123.0]).unwrap(), 0.1);
    }

    #[test]
    fn emptied_input_column_deactivates_the_input() {
        let m = sample_model(2, 2, 17);
        let pruned = m.pruned_weight(0, 0).unwrap().pruned_weight(1, 0).unwrap();
        assert_eq!(pruned.input_active(), &[false, true]);
        assert_eq!(pruned.hidden_active(), &[true, true]);
    }

    #[test]
    fn pruning_input_can_cascade_to_units() {
        // Unit 1 listens only to input 0; removing input 0 must remove unit 1.
        let m = MlpModel::with_masks(
            2,
            2,
            vec![0.4, 0.6, 0.8, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            0.0,
            vec![true, true, true, false],
            vec![true, true],
            vec![true, true],
        )
        .unwrap();
        let pruned = m.pruned_input(0).unwrap();
        assert_eq!(pruned.hidden_active(), &[true, false]);
        assert_eq!(pruned.input_active(), &[false, true]);
        pruned.validate_masks().unwrap();
    }

    #[test]
    fn pruning_is_idempotent() {
        let m = sample_model(3, 2, 2);
        let once = m.pruned_input(1).unwrap();
        let twice = once.pruned_input(1).unwrap();
        assert_eq!(once, twice);
        let out_of_range = m.pruned_input(3);
        assert!(out_of_range.is_err());
    }

    #[test]
    fn active_counts_never_increase_under_pruning() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        for trial in 0..200 {
            let n0 = rng.random_range(1..6);
            let n1 = rng.random_range(1..6);
            let mut m = sample_model(n0, n1, trial);
            for _ in 0..10 {
                let before = (m.n_active_inputs(), m.n_active_hidden(), m.count_params());
                m = match rng.random_range(0..3u32) {
                    0 => m.pruned_input(rng.random_range(0..n0)).unwrap(),
                    1 => m.pruned_hidden(rng.random_range(0..n1)).unwrap(),
                    _ => m
                        .pruned_weight(rng.random_range(0..n1), rng.random_range(0..n0))
                        .unwrap(),
                };
                let after = (m.n_active_inputs(), m.n_active_hidden(), m.count_params());
                assert!(after.0 <= before.0 && after.1 <= before.1 && after.2 <= before.2);
                m.validate_masks().unwrap();
            }
        }
    }

    #[test]
    fn compact_preserves_the_function() {
        let m = sample_model(5, 4, 13)
            .pruned_input(1)
            .unwrap()
            .pruned_hidden(3)
            .unwrap()
            .pruned_weight(0, 2)
            .unwrap();
        let (compacted, kept_inputs, kept_hidden) = m.compact().unwrap();
        assert_eq!(compacted.count_params(), m.count_params());
        assert!(!kept_inputs.contains(&1));
        assert!(!kept_hidden.contains(&3));
        let x = [0.2, f64::NAN, -0.4, 0.9, 1.4];
        let reduced: Vec<f64> = kept_inputs.iter().map(|&h| x[h]).collect();
        assert_eq!(
            m.forward(&x).unwrap().to_bits(),
            compacted.forward(&reduced).unwrap().to_bits()
        );
    }

    #[test]
    fn text_round_trip_is_bit_identical() {
        let m = sample_model(4, 3, 55)
            .pruned_weight(2, 1)
            .unwrap()
            .pruned_input(0)
            .unwrap();
        let text = m.to_text();
        assert!(text.starts_with("trimnet model v1\n"));
        let back = MlpModel::<f64>::from_text(&text).unwrap();
        assert_eq!(m, back);
        // Serializing again gives the same bytes.
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn text_round_trip_holds_for_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let hw: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let m = MlpModel::with_params(3, 2, hw, vec![0.1, -0.7], vec![1.0, 2.5], 0.25f32).unwrap();
        let back = MlpModel::<f32>::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn malformed_model_files_are_rejected_with_context() {
        let good = sample_model(2, 2, 1).to_text();

        let bad_header = good.replace("trimnet model v1", "trimnet model v9");
        let err = MlpModel::<f64>::from_text(&bad_header).unwrap_err();
        assert!(err.to_string().contains("unsupported header"), "{err}");

        let bad_float = good.replace("hidden_biases ", "hidden_biases oops ");
        let err = MlpModel::<f64>::from_text(&bad_float).unwrap_err();
        assert!(err.to_string().contains("hidden_biases"), "{err}");

        let truncated = good.lines().take(4).collect::<Vec<_>>().join("\n");
        let err = MlpModel::<f64>::from_text(&truncated).unwrap_err();
        assert!(err.to_string().contains("missing field"), "{err}");

        let trailing = format!("{good}garbage\n");
        let err = MlpModel::<f64>::from_text(&trailing).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");

        // Mask that violates the invariants (active unit, all weights masked).
        let inconsistent = good.replace("weight_mask 1 1 1 1", "weight_mask 0 0 1 1");
        let err = MlpModel::<f64>::from_text(&inconsistent).unwrap_err();
        assert!(err.to_string().contains("mask inconsistency"), "{err}");
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let m = sample_model(3, 2, 10);
        m.save(&path).unwrap();
        let back = MlpModel::<f64>::load(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn with_masks_canonicalizes_inconsistent_flags() {
        // Input 1 marked inactive while its column still has live weights:
        // canonicalization masks the column (and cascades if needed).
        let m = MlpModel::with_masks(
            2,
            1,
            vec![0.5, 0.9],
            vec![0.0],
            vec![1.0],
            0.0,
            vec![true, true],
            vec![true, false],
            vec![true],
        )
        .unwrap();
        assert!(!m.is_weight_active(0, 1));
        m.validate_masks().unwrap();
    }
}
