//! Floating point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used throughout the crate.
///
/// Implemented for `f32` and `f64`. Default numerical tolerances depend on the
/// precision of the type, so they live here rather than as bare literals.
pub trait Scalar:
    'static
    + Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Default
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + LowerExp
{
    /// Relative pivot tolerance used to reject near-singular Cholesky factorizations.
    fn pivot_tolerance() -> Self;

    /// Default gradient max-norm tolerance for IRLS.
    fn default_fit_tolerance() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// Lossy conversion from a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn pivot_tolerance() -> Self {
        1e-12
    }

    fn default_fit_tolerance() -> Self {
        1e-8
    }
}

impl Scalar for f32 {
    fn pivot_tolerance() -> Self {
        1e-6
    }

    fn default_fit_tolerance() -> Self {
        1e-3
    }
}

/// Logistic function `1 / (1 + exp(-eta))`, evaluated without overflow for either sign.
#[inline]
pub fn sigmoid<T: Scalar>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
