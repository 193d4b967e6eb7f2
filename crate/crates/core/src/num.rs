//! Scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the engine is generic over.
pub trait Real:
    Float + FromPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
}

/// Shorthand for lossy conversion of an f64 constant into the scalar type.
#[inline]
pub fn real<F: Real>(v: f64) -> F {
    F::from_f64(v).expect("f64 constant representable in scalar type")
}

/// Conversion of a usize count into the scalar type.
#[inline]
pub fn real_usize<F: Real>(v: usize) -> F {
    F::from_usize(v).expect("usize count representable in scalar type")
}
