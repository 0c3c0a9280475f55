//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable throughout the crate.
///
/// Implemented by `f32` and `f64`. The bound collects everything the
/// numeric modules need so signatures stay short.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts a literal. Panics only if the target type cannot represent
    /// any finite `f64`, which holds for no supported scalar.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must convert to scalar")
    }

    /// Widens to `f64`; exact for every supported scalar.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_generic<F: Scalar>(xs: &[F]) -> F {
        xs.iter().copied().sum()
    }

    #[test]
    fn both_precisions_satisfy_the_bound() {
        assert_eq!(sum_generic(&[1.0f32, 2.0, 3.0]), 6.0f32);
        assert_eq!(sum_generic(&[1.0f64, 2.0, 3.0]), 6.0f64);
    }

    #[test]
    fn literal_conversion_is_exact_for_f64() {
        assert_eq!(f64::of(0.001), 0.001);
        assert!((f32::of(0.5) - 0.5f32).abs() == 0.0);
    }

    #[test]
    fn widening_round_trips_both_precisions() {
        assert_eq!(0.1f64.as_f64(), 0.1);
        assert_eq!(f32::of(0.1f32.as_f64()), 0.1f32);
    }
}
