//! Scalar abstraction so the numeric core works over f32 or f64.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used throughout the crate.
///
/// All random draws are made in f64 and converted through [`Scalar::from_real`],
/// so a run with the same seed visits the same sample sequence regardless of
/// the scalar type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    fn from_real(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable as scalar")
    }

    fn to_real(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lifting an f64 constant into the scalar type.
pub fn real<S: Scalar>(x: f64) -> S {
    S::from_real(x)
}
