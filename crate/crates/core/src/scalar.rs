//! Floating point abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the model can be evaluated in.
///
/// Everything that touches probabilities is written against this trait so the
/// same code runs in `f64` (the default used by the CLI and file formats) and
/// `f32`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for constants and deserialized values.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Absolute tolerance appropriate for comparing accumulated sums.
    fn sum_tolerance() -> Self;
}

impl Scalar for f64 {
    fn sum_tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn sum_tolerance() -> Self {
        1e-5
    }
}
