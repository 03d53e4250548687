//! Floating-point abstraction shared by the differentiable pieces of the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable by the tape, the model and the losses.
///
/// Implemented for `f32` and `f64`. Everything that compares against the
/// tight tolerances (1e-9 and below) is run in `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for constants and dataset features.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Floor applied inside logarithms of probabilities.
    fn prob_floor() -> Self {
        Self::of(1e-12).max(Self::min_positive_value())
    }

    /// Tolerance for "sums to one" checks at this precision.
    fn sum_tolerance(n: usize) -> Self {
        let scaled = Self::epsilon() * Self::of(4.0 * n.max(1) as f64);
        scaled.max(Self::of(1e-9))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
