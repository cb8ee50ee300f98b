//! Dense row-major matrices, gradient slots and the seeded generator.
//!
//! Everything differentiable in this crate computes its backward pass by
//! hand: each forward function that participates in training has a matching
//! `*_backward` function taking the upstream gradient and returning the
//! gradients of its inputs. [`GradSlot`] is the accumulation point for
//! trainable tensors.

mod grad;
mod matrix;
mod rng;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

pub use grad::GradSlot;
pub use matrix::{l2_normalize_rows, matmul, normalize_rows_backward, Mat, RowNormalized};
pub use rng::Rng;

/// Real scalar the numerical kernels are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
