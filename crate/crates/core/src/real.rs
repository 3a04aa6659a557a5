//! Scalar abstraction over the two supported precisions.
//!
//! Training runs in `f32` for speed; gradient checking and the geometry-heavy
//! evaluation paths use `f64`. Everything numeric in this crate is generic
//! over [`Real`] so both instantiations share one code path.

use core::fmt::{Debug, Display};
use core::iter::Sum;

use num_traits::Float;

/// Floating-point scalar used throughout the engine.
pub trait Real: Float + Debug + Display + Default + Sum + Send + Sync + 'static {
    /// Bit width of the type, recorded in checkpoints.
    const BITS: u32;

    fn from_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Real for f32 {
    const BITS: u32 = 32;

    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline(always)]
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const BITS: u32 = 64;

    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn into_f64(self) -> f64 {
        self
    }
}

/// Shorthand for `T::from_f64` at call sites heavy with literals.
#[inline(always)]
pub fn real<T: Real>(v: f64) -> T {
    T::from_f64(v)
}
