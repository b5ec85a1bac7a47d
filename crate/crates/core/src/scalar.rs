//! Floating-point abstraction used by every numeric routine in this crate.
//!
//! All model evaluation, training, and pruning code is generic over [`Scalar`]
//! so the same algorithms run in `f32` or `f64`. Configuration structs stay in
//! plain `f64` and are converted at the call site with [`Scalar::of`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type usable as the element of models, datasets, and solvers.
///
/// The bound set is the union of what the numeric kernels need: IEEE float
/// semantics (`Float`), `+=`-style ops (`NumAssign`), conversion from config
/// literals (`FromPrimitive`) and back into reports (`ToPrimitive`), iterator
/// sums, text round-tripping for the model file format (`Display`/`FromStr`),
/// and thread-safety so seed runs can be distributed with rayon.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    ///
    /// Panics if the value is not representable at all (never happens for the
    /// finite literals this crate feeds it; infinities and NaN pass through
    /// `Float` conversions on both supported types).
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant must convert into the scalar type")
    }

    /// Converts this scalar into `f64` for reporting.
    fn into_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert into f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum<T>
        + Default
        + Debug
        + Display
        + FromStr
        + Send
        + Sync
        + 'static
{
}
