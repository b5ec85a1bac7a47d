//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong inside the library.
///
/// Callers decide what is fatal; the library never panics on bad input — shape
/// errors, malformed files, and degenerate configurations all come back as a
/// variant of this enum. Panics are reserved for internal invariant violations.
#[derive(Debug, Error)]
pub enum Error {
    /// A slice or matrix had the wrong length for the receiving operation.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A configuration value is outside its documented domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An operation required a non-empty data split that turned out empty.
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),

    /// The dataset violates a structural requirement (sizes, finiteness,
    /// constant columns, ...).
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A CSV cell failed to parse; points at the offending row and column.
    #[error("csv parse error at data row {row}, column `{column}`: {message}")]
    CsvParse {
        row: usize,
        column: String,
        message: String,
    },

    /// A model file did not match the documented text format.
    #[error("invalid model file: {0}")]
    ModelFormat(String),

    /// Training could not proceed (non-finite cost, damping overflow at the
    /// very first step, ...).
    #[error("training failed: {0}")]
    Training(String),

    /// A multi-seed experiment finished with zero successful runs, so there is
    /// nothing to aggregate or select from.
    #[error("no seed produced a successful run")]
    NoSuccessfulSeeds,

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV-level failure that is not tied to one cell (I/O, ragged rows, ...).
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_name_the_offending_location() {
        let e = Error::ShapeMismatch {
            context: "forward",
            expected: 10,
            actual: 7,
        };
        assert_eq!(e.to_string(), "shape mismatch in forward: expected 10, got 7");

        let e = Error::CsvParse {
            row: 3,
            column: "diamMoyen".into(),
            message: "invalid float literal".into(),
        };
        let msg = e.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("diamMoyen"), "{msg}");
    }
}
