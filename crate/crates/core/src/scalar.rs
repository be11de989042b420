//! Numeric traits the metric and similarity code is written against.
//!
//! [`Field`] covers ratios: it is enough for distributions, divergences and
//! precision/recall/F1, and is implemented for the float primitives as well
//! as exact rationals. [`Scalar`] adds the square root needed for vector
//! norms and is therefore float-only.

use core::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{Float, Num, NumCast};

/// A number type that ratios of counts can be computed in.
pub trait Field: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    fn from_count(n: usize) -> Self;

    /// Lossy conversion used for reporting and tolerance checks.
    fn to_f64(self) -> f64;

    #[inline]
    fn abs_diff(self, other: Self) -> Self {
        if self >= other {
            self - other
        } else {
            other - self
        }
    }
}

macro_rules! impl_field_float {
    ($($t:ty),*) => {$(
        impl Field for $t {
            #[inline]
            fn from_count(n: usize) -> Self { n as $t }
            #[inline]
            fn to_f64(self) -> f64 { self as f64 }
        }
    )*};
}
impl_field_float!(f32, f64);

macro_rules! impl_field_ratio {
    ($($t:ty),*) => {$(
        impl Field for Ratio<$t> {
            #[inline]
            fn from_count(n: usize) -> Self {
                Ratio::from_integer(<$t>::try_from(n).expect("count overflows rational base type"))
            }
            fn to_f64(self) -> f64 {
                *self.numer() as f64 / *self.denom() as f64
            }
        }
    )*};
}
impl_field_ratio!(i64, i128);

/// Floating point scalar for embedding vectors.
pub trait Scalar: Field + Float + NumCast + Display {
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}
