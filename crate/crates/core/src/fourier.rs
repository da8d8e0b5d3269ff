//! DFT along the tube dimension.
//!
//! `fft3` uses the unnormalised transform with root `exp(-2πi/n3)`;
//! `ifft3` carries the `1/n3` factor. A real tensor has a conjugate
//! symmetric spectrum (slice `k` is the conjugate of slice `n3 - k`), so
//! slice-wise work only needs the first `n3 / 2 + 1` slices.

use nalgebra::DMatrix;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::{norm_sqr, Complex, Scalar};
use crate::tensor::{Dims, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct FourierTensor<T: Scalar> {
    dims: Dims,
    slices: Vec<DMatrix<Complex<T>>>,
    real_origin: bool,
}

/// Number of Fourier slices that determine a real tensor's spectrum.
#[inline]
pub fn half_len(n3: usize) -> usize {
    n3 / 2 + 1
}

/// Index of the slice conjugate to `k`.
#[inline]
pub fn mirror(k: usize, n3: usize) -> usize {
    (n3 - k) % n3
}

/// Whether Fourier slice `k` of a real tensor is itself real.
#[inline]
pub fn is_self_conjugate(k: usize, n3: usize) -> bool {
    mirror(k, n3) == k
}

impl<T: Scalar> FourierTensor<T> {
    pub fn new(dims: Dims, slices: Vec<DMatrix<Complex<T>>>, real_origin: bool) -> Result<Self> {
        if slices.len() != dims.n3 || slices.iter().any(|s| s.shape() != (dims.n1, dims.n2)) {
            return Err(Error::ShapeMismatch(format!(
                "Fourier slices do not form a {dims} tensor"
            )));
        }
        Ok(Self {
            dims,
            slices,
            real_origin,
        })
    }

    /// Builds a conjugate-symmetric spectrum from its first `n3 / 2 + 1`
    /// slices; the rest are mirrored.
    pub fn from_half_spectrum(
        dims: Dims,
        mut slice: impl FnMut(usize) -> DMatrix<Complex<T>>,
    ) -> Self {
        let n3 = dims.n3;
        let mut slices: Vec<DMatrix<Complex<T>>> = Vec::with_capacity(n3);
        for k in 0..half_len(n3).min(n3) {
            slices.push(slice(k));
        }
        for k in slices.len()..n3 {
            let m = slices[mirror(k, n3)].map(|z| z.conj());
            slices.push(m);
        }
        Self {
            dims,
            slices,
            real_origin: true,
        }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn slices(&self) -> &[DMatrix<Complex<T>>] {
        &self.slices
    }

    #[inline]
    pub fn real_origin(&self) -> bool {
        self.real_origin
    }

    /// Block-diagonal matrix with the Fourier slices on the diagonal.
    pub fn bdiag(&self) -> DMatrix<Complex<T>> {
        let Dims { n1, n2, n3 } = self.dims;
        let mut out = DMatrix::zeros(n1 * n3, n2 * n3);
        for (k, s) in self.slices.iter().enumerate() {
            out.view_mut((k * n1, k * n2), (n1, n2)).copy_from(s);
        }
        out
    }

    /// Largest entrywise deviation from conjugate symmetry.
    pub fn symmetry_defect(&self) -> T {
        let n3 = self.dims.n3;
        let mut worst = T::zero();
        for k in 0..n3 {
            let other = &self.slices[mirror(k, n3)];
            for (a, b) in self.slices[k].iter().zip(other.iter()) {
                worst = worst.max(norm_sqr(*a - b.conj()).sqrt());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> T {
        self.slices
            .iter()
            .flat_map(|s| s.iter())
            .fold(T::zero(), |acc, z| acc + norm_sqr(*z))
            .sqrt()
    }
}

fn transform<T: Scalar>(tubes: &mut [Complex<T>], n3: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n3)
    } else {
        planner.plan_fft_forward(n3)
    };
    fft.process(tubes);
}

/// Unnormalised DFT of every tube.
pub fn fft3<T: Scalar>(a: &Tensor3<T>) -> FourierTensor<T> {
    let dims = a.dims();
    let Dims { n1, n2, n3 } = dims;
    let plane = n1 * n2;
    let data = a.data();
    // tube-major buffer: tube p = i + n1 * j occupies [p * n3, (p + 1) * n3)
    let mut buf = vec![Complex::new(T::zero(), T::zero()); plane * n3];
    for k in 0..n3 {
        for p in 0..plane {
            buf[p * n3 + k] = Complex::new(data[k * plane + p], T::zero());
        }
    }
    transform(&mut buf, n3, false);
    let slices = (0..n3)
        .map(|k| DMatrix::from_fn(n1, n2, |i, j| buf[(i + n1 * j) * n3 + k]))
        .collect();
    FourierTensor {
        dims,
        slices,
        real_origin: true,
    }
}

/// Inverse DFT of every tube. Fails when the result is not real to within
/// [`Scalar::imag_tol`] relative to its norm.
pub fn ifft3<T: Scalar>(ah: &FourierTensor<T>) -> Result<Tensor3<T>> {
    let dims = ah.dims;
    let Dims { n1, n2, n3 } = dims;
    let plane = n1 * n2;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); plane * n3];
    for (k, s) in ah.slices.iter().enumerate() {
        for j in 0..n2 {
            for i in 0..n1 {
                buf[(i + n1 * j) * n3 + k] = s[(i, j)];
            }
        }
    }
    transform(&mut buf, n3, true);
    let scale = T::one() / T::lit(n3 as f64);
    let mut re = vec![T::zero(); plane * n3];
    let mut imag_sq = T::zero();
    let mut total_sq = T::zero();
    for p in 0..plane {
        for k in 0..n3 {
            let z = buf[p * n3 + k] * scale;
            re[k * plane + p] = z.re;
            imag_sq += z.im * z.im;
            total_sq += norm_sqr(z);
        }
    }
    let (imag, total) = (imag_sq.sqrt(), total_sq.sqrt());
    if imag > T::imag_tol() * total {
        return Err(Error::NonNegligibleImaginaryPart((imag / total).as_f64()));
    }
    Tensor3::from_vec(dims, re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn two_point_tube() {
        let a = Tensor3::from_vec(Dims::new(1, 1, 2).unwrap(), vec![1.0, 2.0]).unwrap();
        let f = fft3(&a);
        assert!((f.slices()[0][(0, 0)] - c(3.0, 0.0)).norm() < 1e-15);
        assert!((f.slices()[1][(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
        let back = ifft3(&f).unwrap();
        assert_eq!(back.data(), &[1.0, 2.0]);
    }

    #[test]
    fn inverse_of_explicit_spectrum() {
        let dims = Dims::new(1, 1, 2).unwrap();
        let f = FourierTensor::new(
            dims,
            vec![DMatrix::from_element(1, 1, c(3.0, 0.0)), DMatrix::from_element(1, 1, c(-1.0, 0.0))],
            true,
        )
        .unwrap();
        let t = ifft3(&f).unwrap();
        assert!((t.get(0, 0, 0) - 1.0).abs() < 1e-15 && (t.get(0, 0, 1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_in_zero_out() {
        let z = Tensor3::<f64>::zeros(Dims::new(2, 3, 4).unwrap());
        let f = fft3(&z);
        assert_eq!(f.frobenius_norm(), 0.0);
        assert_eq!(ifft3(&f).unwrap(), z);
    }

    #[test]
    fn broken_symmetry_is_rejected() {
        let dims = Dims::new(1, 1, 3).unwrap();
        let f = FourierTensor::new(
            dims,
            vec![
                DMatrix::from_element(1, 1, c(1.0, 0.0)),
                DMatrix::from_element(1, 1, c(0.0, 1.0)),
                DMatrix::from_element(1, 1, c(0.0, 1.0)),
            ],
            true,
        )
        .unwrap();
        assert!(f.symmetry_defect() > 1.0);
        assert!(matches!(ifft3(&f), Err(Error::NonNegligibleImaginaryPart(_))));
    }

    #[test]
    fn half_spectrum_mirrors() {
        let dims = Dims::new(1, 2, 5).unwrap();
        let f = FourierTensor::<f64>::from_half_spectrum(dims, |k| {
            DMatrix::from_fn(1, 2, |_, j| c(k as f64 + j as f64, if k == 0 { 0.0 } else { 1.0 }))
        });
        assert_eq!(f.symmetry_defect(), 0.0);
        assert_eq!(f.slices()[4][(0, 1)], c(2.0, -1.0));
        assert_eq!(half_len(4), 3);
        assert!(is_self_conjugate(2, 4) && !is_self_conjugate(2, 5));
    }
}
