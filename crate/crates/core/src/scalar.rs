//! Scalar types used for similarity scores, thresholds and accuracy metrics.
//!
//! Every score in this crate is a ratio of two token or message counts, so the
//! numeric core only needs to build values from `num / den` and compare them.
//! `f64` is the everyday choice; [`Rational`](crate::Rational) gives exact
//! arithmetic where ties and threshold comparisons must be bit-for-bit.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};

/// Numeric type a similarity score or metric is expressed in.
pub trait Score: Num + Copy + PartialOrd + Debug + Display + Send + Sync + 'static {
    /// Builds `num / den`. `den` must be non-zero.
    fn from_ratio(num: usize, den: usize) -> Self;

    /// Nearest representable value to `value`.
    fn from_f64(value: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Score for f64 {
    fn from_ratio(num: usize, den: usize) -> Self {
        debug_assert!(den > 0);
        num as f64 / den as f64
    }

    fn from_f64(value: f64) -> Self {
        value
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Score for f32 {
    fn from_ratio(num: usize, den: usize) -> Self {
        debug_assert!(den > 0);
        (num as f64 / den as f64) as f32
    }

    fn from_f64(value: f64) -> Self {
        value as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Denominator used when a configured decimal threshold is turned into an
/// exact ratio.
const DECIMAL_SCALE: u64 = 1_000_000;

impl Score for Ratio<u64> {
    fn from_ratio(num: usize, den: usize) -> Self {
        Ratio::new(num as u64, den as u64)
    }

    fn from_f64(value: f64) -> Self {
        let clamped = value.max(0.0);
        Ratio::new((clamped * DECIMAL_SCALE as f64).round() as u64, DECIMAL_SCALE)
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_agree_across_scalars() {
        assert_eq!(<f64 as Score>::from_ratio(4, 6), 4.0 / 6.0);
        assert_eq!(<Ratio<u64> as Score>::from_ratio(4, 6), Ratio::new(2, 3));
        assert!((<f32 as Score>::from_ratio(1, 3) - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn decimal_thresholds_become_exact() {
        assert_eq!(<Ratio<u64> as Score>::from_f64(0.8), Ratio::new(4, 5));
        assert_eq!(<Ratio<u64> as Score>::from_f64(0.25), Ratio::new(1, 4));
        assert_eq!(Score::to_f64(Ratio::new(3u64, 5)), 0.6);
    }

    #[test]
    fn equal_rationals_give_equal_floats() {
        // IEEE division is correctly rounded, so equal ratios compare equal.
        assert_eq!(<f64 as Score>::from_ratio(8, 12), <f64 as Score>::from_ratio(4, 6));
        assert_eq!(<f64 as Score>::from_ratio(8, 10), 0.8);
    }
}
