//! Scalar abstraction for the numeric core.
//!
//! Statistics and classifiers are generic over [`Scalar`] so they run on
//! f32 or f64 unchanged; the pipeline instantiates them at [`crate::Real`].

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the numeric core: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossless conversion from usize counts (sample sizes, cell counts).
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}
