//! Tabular regression dataset: named input columns, one target column, a
//! train/validation split, and per-column standardization statistics.
//!
//! Inputs are stored in their natural units; models are always fed the
//! *standardized* values `(x - mean) / std`, with mean and population standard
//! deviation computed per column over **all** rows once at construction (so
//! the encoding of a row does not depend on which split it landed in).
//! Targets are left in natural units.
//!
//! # CSV format
//!
//! Comma-separated with a header row. Every column except the designated
//! target column and the optional `split` column is an input. The `split`
//! column holds `train` or `validation`; when absent, a seeded random split
//! with a 2:1 train:validation ratio is drawn at load time. Lines starting
//! with `#` are comments (writers emit provenance such as the generator seed
//! there) and are ignored by the reader.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats;

/// Which partition a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            other => Err(format!("`{other}` is neither `train` nor `validation`")),
        }
    }
}

/// How to assign rows to splits at construction.
#[derive(Debug, Clone)]
pub enum SplitSpec {
    /// Seeded random partition, 2:1 train:validation (train size rounded up).
    Random { seed: u64 },
    /// Caller-provided assignment, one entry per row.
    Explicit(Vec<Split>),
}

/// Standardization statistics of one input column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats<F> {
    pub mean: F,
    /// Population standard deviation (divisor `n`); always > 0.
    pub std: F,
}

/// Immutable dataset with standardization baked in at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    input_names: Vec<String>,
    target_name: String,
    /// Row-major `n_rows × n_inputs`, natural units.
    inputs: Vec<F>,
    targets: Vec<F>,
    split: Vec<Split>,
    input_stats: Vec<ColumnStats<F>>,
}

/// Name of the split column in CSV files.
pub const SPLIT_COLUMN: &str = "split";

impl<F: Scalar> Dataset<F> {
    /// Builds a dataset and its standardization statistics.
    ///
    /// Rejects empty data, shape mismatches, non-finite values, duplicate or
    /// reserved column names, and constant input columns (their standard
    /// deviation would be zero and the standardized value undefined).
    pub fn new(
        input_names: Vec<String>,
        target_name: String,
        inputs: Vec<F>,
        targets: Vec<F>,
        split: SplitSpec,
    ) -> Result<Self> {
        let n_inputs = input_names.len();
        if n_inputs == 0 {
            return Err(Error::InvalidDataset("no input columns".into()));
        }
        let n_rows = targets.len();
        if n_rows == 0 {
            return Err(Error::InvalidDataset("no data rows".into()));
        }
        if inputs.len() != n_rows * n_inputs {
            return Err(Error::ShapeMismatch {
                context: "dataset input matrix",
                expected: n_rows * n_inputs,
                actual: inputs.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for name in input_names.iter().chain(std::iter::once(&target_name)) {
            if name == SPLIT_COLUMN {
                return Err(Error::InvalidDataset(format!(
                    "column name `{SPLIT_COLUMN}` is reserved for the split assignment"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate column name `{name}`")));
            }
        }
        if let Some(v) = inputs.iter().chain(targets.iter()).find(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value {v} in the data"
            )));
        }

        let split = match split {
            SplitSpec::Explicit(s) => {
                if s.len() != n_rows {
                    return Err(Error::ShapeMismatch {
                        context: "explicit split assignment",
                        expected: n_rows,
                        actual: s.len(),
                    });
                }
                s
            }
            SplitSpec::Random { seed } => random_split(n_rows, seed),
        };

        let mut input_stats = Vec::with_capacity(n_inputs);
        for c in 0..n_inputs {
            let column: Vec<F> = (0..n_rows).map(|r| inputs[r * n_inputs + c]).collect();
            let mean = stats::mean(&column);
            let std = stats::population_std(&column);
            if std <= F::zero() {
                return Err(Error::InvalidDataset(format!(
                    "input column `{}` is constant (zero standard deviation)",
                    input_names[c]
                )));
            }
            input_stats.push(ColumnStats { mean, std });
        }

        Ok(Self {
            input_names,
            target_name,
            inputs,
            targets,
            split,
            input_stats,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn input_stats(&self) -> &[ColumnStats<F>] {
        &self.input_stats
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    /// Raw (natural-unit) input row.
    pub fn input_row(&self, row: usize) -> &[F] {
        let n = self.n_inputs();
        &self.inputs[row * n..(row + 1) * n]
    }

    pub fn target(&self, row: usize) -> F {
        self.targets[row]
    }

    /// Indices of the rows in `split`, ascending.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| self.split[r] == split).collect()
    }

    /// Standardizes one row into `buf` (length `n_inputs`).
    pub fn normalized_row_into(&self, row: usize, buf: &mut [F]) {
        debug_assert_eq!(buf.len(), self.n_inputs());
        let raw = self.input_row(row);
        for (c, slot) in buf.iter_mut().enumerate() {
            let s = &self.input_stats[c];
            *slot = (raw[c] - s.mean) / s.std;
        }
    }

    /// Standardized input matrix for the given rows, flat row-major.
    pub fn normalized_inputs_for(&self, rows: &[usize]) -> Vec<F> {
        let n = self.n_inputs();
        let mut out = vec![F::zero(); rows.len() * n];
        for (k, &r) in rows.iter().enumerate() {
            self.normalized_row_into(r, &mut out[k * n..(k + 1) * n]);
        }
        out
    }

    /// Targets for the given rows.
    pub fn targets_for(&self, rows: &[usize]) -> Vec<F> {
        rows.iter().map(|&r| self.targets[r]).collect()
    }

    /// Mean of one *standardized* input column over the rows of `split`.
    pub fn normalized_column_mean(&self, column: usize, split: Split) -> Result<F> {
        let rows = self.split_indices(split);
        if rows.is_empty() {
            return Err(Error::EmptySplit(match split {
                Split::Train => "train",
                Split::Validation => "validation",
            }));
        }
        let s = &self.input_stats[column];
        let values: Vec<F> = rows
            .iter()
            .map(|&r| (self.inputs[r * self.n_inputs() + column] - s.mean) / s.std)
            .collect();
        Ok(stats::mean(&values))
    }

    /// Renders the dataset as CSV: the given comment lines (prefixed `# `),
    /// a header, then one row per record with the split in the last column.
    pub fn to_csv_string(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            s.push_str("# ");
            s.push_str(c);
            s.push('\n');
        }
        for name in &self.input_names {
            s.push_str(name);
            s.push(',');
        }
        s.push_str(&self.target_name);
        s.push(',');
        s.push_str(SPLIT_COLUMN);
        s.push('\n');
        let n = self.n_inputs();
        for r in 0..self.n_rows() {
            for c in 0..n {
                s.push_str(&format!("{}", self.inputs[r * n + c]));
                s.push(',');
            }
            s.push_str(&format!("{},{}\n", self.targets[r], self.split[r]));
        }
        s
    }

    /// Writes [`Dataset::to_csv_string`] to `path`.
    pub fn save_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        fs::write(path, self.to_csv_string(comments))?;
        Ok(())
    }

    /// Loads a CSV file (format in the module docs). `target_name` designates
    /// the target column; every other non-`split` column becomes an input. If
    /// the file has no `split` column, a random 2:1 split is drawn from
    /// `fallback_split_seed`.
    pub fn load_csv(path: &Path, target_name: &str, fallback_split_seed: u64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;

        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let target_col = headers
            .iter()
            .position(|h| h == target_name)
            .ok_or_else(|| {
                Error::InvalidDataset(format!("target column `{target_name}` not found"))
            })?;
        let split_col = headers.iter().position(|h| h == SPLIT_COLUMN);
        let input_cols: Vec<usize> = (0..headers.len())
            .filter(|&c| c != target_col && Some(c) != split_col)
            .collect();
        let input_names: Vec<String> = input_cols.iter().map(|&c| headers[c].clone()).collect();

        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut split = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let row = idx + 1; // 1-based data row for diagnostics
            if record.len() != headers.len() {
                return Err(Error::CsvParse {
                    row,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            let parse = |col: usize| -> Result<F> {
                record[col].parse::<F>().map_err(|_| Error::CsvParse {
                    row,
                    column: headers[col].clone(),
                    message: format!("`{}` is not a number", &record[col]),
                })
            };
            for &c in &input_cols {
                inputs.push(parse(c)?);
            }
            targets.push(parse(target_col)?);
            if let Some(c) = split_col {
                split.push(record[c].parse::<Split>().map_err(|message| Error::CsvParse {
                    row,
                    column: SPLIT_COLUMN.into(),
                    message,
                })?);
            }
        }

        let split_spec = if split_col.is_some() {
            SplitSpec::Explicit(split)
        } else {
            SplitSpec::Random {
                seed: fallback_split_seed,
            }
        };
        Self::new(input_names, target_name.to_string(), inputs, targets, split_spec)
    }
}

/// Seeded 2:1 partition: shuffles the row indices with ChaCha8 and sends the
/// first `ceil(2n/3)` to the training split.
pub(crate) fn random_split(n_rows: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (2 * n_rows).div_ceil(3);
    let mut split = vec![Split::Validation; n_rows];
    for &r in order.iter().take(n_train) {
        split[r] = Split::Train;
    }
    split
}
