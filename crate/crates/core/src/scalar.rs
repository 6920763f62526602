//! Scalar abstraction: all numerics are generic over a floating-point `Real`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the whole crate is generic over.
///
/// `of` is the literal-injection helper: every numeric constant in the library
/// goes through it, so `f32` builds degrade gracefully instead of failing to
/// compile on `0.5f64` literals.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("integer not representable in scalar type")
    }

    fn of_i32(n: i32) -> Self {
        Self::from_i32(n).expect("integer not representable in scalar type")
    }

    /// Lossy conversion back to `f64` for reporting.
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
