//! Floating-point scalar abstraction shared by every cost computation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real type used for costs, shares and payments.
///
/// Loads are always exact `usize` counts; only money-like quantities are
/// carried in the scalar.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Absolute tolerance used by comparisons unless the caller overrides it.
    fn default_epsilon() -> Self;

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar")
    }

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar")
    }
}

impl Scalar for f64 {
    fn default_epsilon() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn default_epsilon() -> Self {
        1e-5
    }
}

/// `|a - b| <= eps`
pub fn approx_eq<S: Scalar>(a: S, b: S, eps: S) -> bool {
    (a - b).abs() <= eps
}
