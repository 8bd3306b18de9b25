//! Scalar abstraction shared by every numerical module.
//!
//! All operator math is written against [`Real`], which is implemented for
//! `f32` and `f64`. Complex entries are `Complex<R>`; matrices and vectors are
//! dynamically sized nalgebra containers over those entries.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real field used as the base of every complex computation.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Serialize + DeserializeOwned
{
    /// Converts an `f64` literal into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn from_i64_lossy(n: i64) -> Self {
        Self::from_i64(n).expect("i64 representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon for this precision.
    fn epsilon() -> Self;
}

impl Real for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
}

pub type C<R> = Complex<R>;
pub type CMatrix<R> = DMatrix<Complex<R>>;
pub type CVector<R> = DVector<Complex<R>>;

#[inline]
pub fn c<R: Real>(re: f64, im: f64) -> C<R> {
    Complex::new(R::lit(re), R::lit(im))
}

#[inline]
pub fn cr<R: Real>(re: R) -> C<R> {
    Complex::new(re, R::zero())
}

/// `z^n` for any integer `n`; negative powers of zero give `None`.
pub fn cpowi<R: Real>(z: C<R>, n: i64) -> Option<C<R>> {
    if n < 0 && z.re.is_zero() && z.im.is_zero() {
        return None;
    }
    let base = if n < 0 { C::new(R::one(), R::zero()) / z } else { z };
    let mut e = n.unsigned_abs();
    let mut acc = C::new(R::one(), R::zero());
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    Some(acc)
}

/// Vector norms available for reporting residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    #[default]
    L2,
    LInf,
}

impl NormKind {
    pub fn of<R: Real>(self, v: &CVector<R>) -> R {
        match self {
            NormKind::L2 => v.norm(),
            NormKind::LInf => v.iter().fold(R::zero(), |m, z| m.max(z.modulus())),
        }
    }
}

/// Hermitian inner product `<a, b> = sum a_i conj(b_i)`.
pub fn inner<R: Real>(a: &CVector<R>, b: &CVector<R>) -> C<R> {
    a.iter().zip(b.iter()).fold(C::new(R::zero(), R::zero()), |acc, (x, y)| acc + x * y.conj())
}
