//! Minimal reverse-mode autodiff over 2-D arrays.
//!
//! The engine is deliberately small: eager ops on `Array2<T>` recorded on a
//! [`Tape`], with hand-written adjoints per op. It is generic over the float
//! type so training runs in `f32` while gradient verification runs in `f64`
//! against central finite differences.

mod adam;
mod gradcheck;
mod params;
mod tape;

#[cfg(test)]
mod tests;

pub use adam::Adam;
pub use gradcheck::{central_diff, relative_error};
pub use params::{Bound, GradAccum, ParamId, ParamStore};
pub use tape::{ConvSpec, Grads, Tape, Var};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

/// Float type usable by the tape: `f32` or `f64`.
pub trait Scalar:
    LinalgScalar + Float + ScalarOperand + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
