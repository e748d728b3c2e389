//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the tensor, model and descriptor code is generic over.
///
/// Implemented for `f32` and `f64`. Gradient verification and every
/// persisted artifact use `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Bytes per value, recorded in binary headers.
    const WIDTH: u8;

    /// Converts an `f64` literal; never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float to f64")
    }
}

impl Scalar for f32 {
    const WIDTH: u8 = 4;
}

impl Scalar for f64 {
    const WIDTH: u8 = 8;
}
