//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use smallvec::SmallVec;

/// Floating point scalar the laboratory computes with (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(self, 0)`.
    #[inline]
    fn pos(self) -> Self {
        self.max(Self::zero())
    }

    /// `max(-self, 0)`.
    #[inline]
    fn neg_part(self) -> Self {
        (-self).max(Self::zero())
    }

    /// Odd power `|x|^{e-1} x`.
    #[inline]
    fn signed_pow(self, e: Self) -> Self {
        if self == Self::zero() {
            Self::zero()
        } else {
            self.abs().powf(e) * self.signum()
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Point or vector in ℝⁿ. Inline storage covers every dimension the grids use.
pub type Vector<T> = SmallVec<[T; 4]>;

pub fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

pub fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
