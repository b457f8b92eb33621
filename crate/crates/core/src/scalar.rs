//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// All grid and transport code is written against this trait. Tolerances in
/// tests and acceptance checks are calibrated for `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite or infinite float converts")
    }

    /// Smallest positive value treated as "mass" by support tests.
    #[inline]
    fn tiny() -> Self {
        Self::min_positive_value()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sum of a slice by pairwise reduction; deterministic for a fixed length.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        return xs.iter().fold(T::zero(), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        let naive: f64 = xs.iter().sum();
        assert_eq!(pairwise_sum(&xs), naive);
    }

    #[test]
    fn lit_round_trips_f32() {
        assert_eq!(<f32 as Real>::lit(0.25), 0.25f32);
    }
}
