//! Scalar abstraction for the numerical core.
//!
//! The inference routines (normal distribution, rank statistics, conditional
//! error rates, concordance estimation) are written once over [`Real`] and
//! instantiated for `f64` (the simulation default) and `f32`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the inference routines.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal or constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
