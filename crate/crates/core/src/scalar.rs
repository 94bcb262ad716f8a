//! Scalar abstraction shared by every numerical routine in the crate.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative threshold below which eigenvalues/singular values count as zero.
    ///
    /// 1e-10 of the largest one, floored at a few thousand ulps for `f32`.
    #[inline]
    fn rank_tol() -> Self {
        Self::lit(1e-10).max(Self::epsilon() * Self::lit(1e3))
    }

    /// Eigenvalue floor (relative to the largest) used before inverting.
    #[inline]
    fn eig_floor() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(10.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

/// `e^{j theta}`
#[inline]
pub fn expj<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn is_finite<T: Real>(z: Complex<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}
