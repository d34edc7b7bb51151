//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the kernels are generic over (`f32` or `f64`).
pub trait Real:
    Float + NumAssign + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for constants inside generic code.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts into any Real")
    }
}

impl<T> Real for T where
    T: Float + NumAssign + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}
