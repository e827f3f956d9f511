//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the model is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only for types that cannot hold it.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    /// Converts a count into the scalar type.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable logistic function `1 / (1 + e^-x)`.
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`logistic`] for `p` in `(0, 1)`.
pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}
