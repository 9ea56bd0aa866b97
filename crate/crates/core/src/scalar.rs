//! Floating point abstraction shared by every numerical routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the solver can run on (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Debug
    + Display
    + Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every finite `f64` is representable (possibly rounded).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `self^e` with fast paths for the common constitutive exponents.
    #[inline]
    fn pow_law(self, e: Self) -> Self {
        if e == Self::one() {
            self
        } else if e == Self::zero() {
            Self::one()
        } else if e == Self::lit(2.0) {
            self * self
        } else if e == Self::lit(0.5) {
            self.sqrt()
        } else if e == -Self::one() {
            self.recip()
        } else if e == Self::lit(0.25) {
            self.sqrt().sqrt()
        } else if e == Self::lit(-0.5) {
            self.sqrt().recip()
        } else if e == Self::lit(1.5) {
            self * self.sqrt()
        } else {
            self.powf(e)
        }
    }

    /// Unit roundoff of the format.
    #[inline]
    fn eps() -> Self {
        Self::epsilon()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
