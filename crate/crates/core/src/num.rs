//! Scalar abstraction shared by the metric and sampling math.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the metric and filter routines are generic over.
///
/// Implemented for `f32` and `f64`. Exact rational counterparts live next to
/// the routines that admit them (see [`crate::metrics::rouge1_exact`]).
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static {
    /// Converts a count into the scalar type.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    /// Converts an `f64` literal or parameter into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 representable as scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
