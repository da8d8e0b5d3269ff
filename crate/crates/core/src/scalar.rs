//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All algorithms are written against [`Scalar`], which bundles the
//! nalgebra field traits (QR, dense algebra) with the bounds rustfft needs.
//! Singular value decompositions go through faer. Both `f32` and `f64`
//! implement it; the binary file formats are always binary64 and convert
//! on the way in and out.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{DMatrix, RealField};
use rustfft::FftNum;

pub use nalgebra::Complex;

/// Thin SVD factors `(U, σ, V)` with `A = U diag(σ) Vᴴ`.
pub type SvdFactors<E, T> = (DMatrix<E>, Vec<T>, DMatrix<E>);

pub trait Scalar: RealField + FftNum + Copy + Display + LowerExp + Debug {
    /// Relative threshold under which an imaginary residue left by an
    /// inverse transform is treated as round-off.
    fn imag_tol() -> Self;

    /// Relative threshold separating a nonzero singular tube from noise.
    fn rank_tol() -> Self;

    /// Machine epsilon.
    fn eps() -> Self;

    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Thin SVD of a real matrix; `None` if the iteration fails.
    fn svd_real(a: &DMatrix<Self>) -> Option<SvdFactors<Self, Self>>;

    /// Thin SVD of a complex matrix; `None` if the iteration fails.
    fn svd_complex(a: &DMatrix<Complex<Self>>) -> Option<SvdFactors<Complex<Self>, Self>>;

    /// Absolute value. `RealField` and `Signed` both provide `abs`, so
    /// generic code calls this instead.
    #[inline]
    fn mag(self) -> Self {
        <Self as nalgebra::ComplexField>::abs(self)
    }
}

macro_rules! faer_svd {
    ($t:ty) => {
        fn svd_real(a: &DMatrix<$t>) -> Option<SvdFactors<$t, $t>> {
            let (m, n) = a.shape();
            let svd = faer::Mat::from_fn(m, n, |i, j| a[(i, j)]).thin_svd().ok()?;
            let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
            let k = m.min(n);
            Some((
                DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
                (0..k).map(|i| s[i]).collect(),
                DMatrix::from_fn(n, k, |i, j| v[(i, j)]),
            ))
        }

        fn svd_complex(a: &DMatrix<Complex<$t>>) -> Option<SvdFactors<Complex<$t>, $t>> {
            let (m, n) = a.shape();
            let svd = faer::Mat::from_fn(m, n, |i, j| a[(i, j)]).thin_svd().ok()?;
            let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
            let k = m.min(n);
            Some((
                DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
                (0..k).map(|i| s[i].re).collect(),
                DMatrix::from_fn(n, k, |i, j| v[(i, j)]),
            ))
        }
    };
}

impl Scalar for f64 {
    fn imag_tol() -> Self {
        1e-10
    }
    fn rank_tol() -> Self {
        1e-10
    }
    fn eps() -> Self {
        f64::EPSILON
    }
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    faer_svd!(f64);
}

impl Scalar for f32 {
    fn imag_tol() -> Self {
        1e-4
    }
    fn rank_tol() -> Self {
        1e-5
    }
    fn eps() -> Self {
        f32::EPSILON
    }
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    faer_svd!(f32);
}

/// Squared modulus of a complex value.
#[inline]
pub(crate) fn norm_sqr<T: Scalar>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}
