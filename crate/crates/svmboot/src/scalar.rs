//! Scalar abstraction the numeric core is generic over.

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};

/// Floating-point scalar used throughout the crate.
///
/// Implemented for `f32` and `f64`. The trait bundles the arithmetic,
/// conversion, formatting and serialization capabilities the library needs so
/// that downstream code can stay generic without repeating bounds.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + Serialize
    + DeserializeOwned
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Conversion from an `f64` constant (lossy for `f32`).
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant must convert to the scalar type")
    }

    /// Conversion to `f64` for reporting and diagnostics.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
