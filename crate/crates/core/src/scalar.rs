//! Scalar abstraction shared by every numerical kernel.
//!
//! All of the linear algebra runs on `nalgebra` and all of the transforms on
//! `rustfft`, so the scalar has to satisfy both. `f32` and `f64` qualify.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    RealField + Copy + rustfft::FftNum + FromPrimitive + ToPrimitive + Display + LowerExp + Debug
{
}

impl<T> Real for T where
    T: RealField + Copy + rustfft::FftNum + FromPrimitive + ToPrimitive + Display + LowerExp + Debug
{
}

/// Complex scalar over `T`.
pub type C<T> = Complex<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    nalgebra::convert(n as f64)
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `e^{iθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> C<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub fn im<T: Real>(x: T) -> C<T> {
    Complex::new(T::zero(), x)
}

/// Loose tolerance that tracks the working precision: `max(tol, 100·ε)`.
#[inline]
pub fn tol<T: Real>(tol: f64) -> T {
    let floor = T::default_epsilon() * lit(100.0);
    let t: T = lit(tol);
    if t > floor {
        t
    } else {
        floor
    }
}
