//! Scalar abstraction for the differentiation engine.
//!
//! Everything in [`crate::tensor`] is generic over the element type so the
//! same kernels run in f32 or f64. The rest of the library pins f64 through
//! the aliases at the crate root; f32 exists for callers that want to trade
//! precision for speed.

use std::fmt;

use num_traits::{Float, NumAssignOps};

/// Element type of a [`crate::tensor::DiffTensor`].
///
/// This is `num_traits::Float` plus the assignment operators the kernels use
/// and the thread-safety bounds the dataset pipeline needs.
pub trait Scalar:
    Float + NumAssignOps + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from f64, used for literals inside generic code.
    fn from_f64(v: f64) -> Self;

    /// Widening (or identity) conversion back to f64 for reporting.
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}
