//! Scalar abstraction shared by the link-budget, timing and latency code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating point type the numeric parts of the simulator are generic over.
///
/// Scheduling and grid bookkeeping run on integer symbol/SU indices; only
/// quantities with physical units (dB, metres, seconds) go through `Scalar`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Converts an `f64` constant into `Self`.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `10·log10(x)`.
pub fn db<F: Scalar>(x: F) -> F {
    F::lit(10.0) * x.log10()
}
