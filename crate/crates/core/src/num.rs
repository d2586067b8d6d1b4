//! Scalar abstraction: all numeric code is generic over [`Real`] (f32 or f64).

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used throughout the crate.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + Debug + Display + Default + Sum + 'static
{
}

impl<T> Real for T where
    T: num_traits::Float + num_traits::FromPrimitive + Debug + Display + Default + Sum + 'static
{
}

/// Convert an f64 literal into the working scalar type.
///
/// Panics only if the target type cannot represent any f64, which cannot
/// happen for the f32/f64 instantiations this crate supports.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must convert into the scalar type")
}
