//! Floating-point scalar abstraction.
//!
//! Every numerical module in this crate is generic over [`Scalar`], so the
//! same solver code runs in `f32` or `f64`. Concrete aliases for the main
//! types live at the crate root. The default tolerances shipped with the
//! solver assume `f64`; `f32` users should loosen them accordingly.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64` (or any type with the same surface).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into the scalar type.
    ///
    /// Panics if the value is not representable, which cannot happen for the
    /// finite literals this crate feeds it.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal must convert to scalar type")
    }

    /// Converts a count into the scalar type.
    fn cast_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize must convert to scalar type")
    }

    /// Lossy view of the scalar as `f64`, for diagnostics and error messages.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn casts_round_trip_for_both_widths() {
        assert_eq!(<f64 as Scalar>::cast(0.00375), 0.00375);
        assert_eq!(<f32 as Scalar>::cast(0.5), 0.5f32);
        assert_eq!(<f64 as Scalar>::cast_usize(127), 127.0);
        assert_eq!(0.25f64.as_f64(), 0.25);
    }
}
