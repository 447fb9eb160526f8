//! Scalar abstraction for the numeric kernels.
//!
//! Everything downstream is generic over [`Real`], which is `num_traits::Float`
//! plus the special functions the activations need. `f64` is the working type
//! for all documented tolerances; `f32` is supported for callers that can live
//! with single-precision error.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn erf(self) -> Self;

    /// Lossy conversion from an `f64` constant.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }

    /// Standard normal CDF.
    fn norm_cdf(self) -> Self {
        let half = Self::c(0.5);
        let inv_sqrt2 = Self::c(std::f64::consts::FRAC_1_SQRT_2);
        half * ((self * inv_sqrt2).erf() + Self::one())
    }

    /// Standard normal density.
    fn norm_pdf(self) -> Self {
        let inv_sqrt_2pi = Self::c(1.0 / (2.0 * std::f64::consts::PI).sqrt());
        inv_sqrt_2pi * (-self * self * Self::c(0.5)).exp()
    }
}

impl Real for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

impl Real for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }
}
