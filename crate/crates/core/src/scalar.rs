//! Scalar abstractions.
//!
//! Attention weights are stored on disk as `f32`, but the engine runs over any
//! [`Weight`] (`f32` or `f64`). Influence scores are computed in any [`Score`],
//! which includes exact rationals so worked examples can be checked without
//! rounding.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, NumCast};

/// Floating-point type an attention tensor can be held in.
pub trait Weight:
    Float + FromPrimitive + NumCast + FromStr + Display + Debug + Default + Send + Sync + 'static
{
    /// Widens a value read from the `f32` payload.
    fn from_payload(v: f32) -> Self {
        <Self as NumCast>::from(v).expect("f32 fits any float weight")
    }

    /// Narrows to the on-disk `f32` representation.
    fn to_payload(self) -> f32 {
        self.to_f32().unwrap_or(f32::NAN)
    }

    /// Converts to `f64` through the shortest decimal form, so `0.3f32`
    /// becomes `0.3` rather than `0.30000001192092896`.
    fn to_decimal_f64(self) -> f64 {
        self.to_string().parse().unwrap_or(f64::NAN)
    }
}

impl Weight for f32 {}
impl Weight for f64 {}

/// Numeric type influence scores are accumulated in.
pub trait Score: Num + Clone + PartialOrd + Debug {
    fn from_count(count: u64) -> Self;

    /// Smallest integer not below `self`; `None` if the value is not a number.
    fn ceil_u64(&self) -> Option<u64>;

    fn to_f64(&self) -> f64;
}

macro_rules! float_score {
    ($t:ty) => {
        impl Score for $t {
            fn from_count(count: u64) -> Self {
                count as $t
            }

            fn ceil_u64(&self) -> Option<u64> {
                if self.is_nan() {
                    None
                } else if *self <= 0.0 {
                    Some(0)
                } else {
                    Some(self.ceil() as u64)
                }
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }
        }
    };
}

float_score!(f32);
float_score!(f64);

impl Score for Ratio<i64> {
    fn from_count(count: u64) -> Self {
        Ratio::from_integer(i64::try_from(count).expect("count fits i64"))
    }

    fn ceil_u64(&self) -> Option<u64> {
        let c = self.ceil().to_integer();
        Some(u64::try_from(c).unwrap_or(0))
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Parses a decimal literal into a weight type.
pub fn parse_weight<T: Weight>(s: &str) -> Option<T> {
    s.trim().parse::<T>().ok()
}
