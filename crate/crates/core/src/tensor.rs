//! Dense third-order tensors and the t-product algebra.
//!
//! Entry `(i, j, k)` (zero-based) lives at linear offset
//! `(k * n2 + j) * n1 + i`: column-major inside a frontal slice, slices
//! stored back to back. `unfold` is therefore a reshape of the buffer.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fourier::{fft3, ifft3, FourierTensor};
use crate::scalar::Scalar;

/// Side limit for materialising `bcirc`, which is quadratic in `n * n3`.
pub const BCIRC_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl Dims {
    pub fn new(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got {n1}x{n2}x{n3}"
            )));
        }
        Ok(Self { n1, n2, n3 })
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    #[inline]
    pub fn min_side(&self) -> usize {
        self.n1.min(self.n2)
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n2 + j) * self.n1 + i
    }

    /// Inverse of [`Dims::offset`].
    #[inline]
    pub fn coords(&self, offset: usize) -> (usize, usize, usize) {
        let i = offset % self.n1;
        let rest = offset / self.n1;
        (i, rest % self.n2, rest / self.n2)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.n1, self.n2, self.n3)
    }
}

impl FromStr for Dims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "expected N1xN2xN3, got {s:?}"
            )));
        }
        let mut n = [0usize; 3];
        for (slot, p) in n.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad dimension {p:?} in {s:?}")))?;
        }
        Dims::new(n[0], n[1], n[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.numel()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.numel() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {dims} tensor",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { dims, data })
    }

    /// Builds a tensor from a closure over zero-based `(i, j, k)`.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.numel());
        for k in 0..dims.n3 {
            for j in 0..dims.n2 {
                for i in 0..dims.n1 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    /// Tensor whose frontal slices are the given `n1 x n2` matrices.
    pub fn from_slices(slices: &[DMatrix<T>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no frontal slices".into()))?;
        let dims = Dims::new(first.nrows(), first.ncols(), slices.len())?;
        let mut data = Vec::with_capacity(dims.numel());
        for s in slices {
            if s.shape() != first.shape() {
                return Err(Error::ShapeMismatch("frontal slices differ in shape".into()));
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::from_vec(dims, data)
    }

    /// The `n x n x n3` identity: `I_n` as first frontal slice, zeros elsewhere.
    pub fn identity(n: usize, n3: usize) -> Result<Self> {
        let dims = Dims::new(n, n, n3)?;
        Ok(Self::from_fn(dims, |i, j, k| {
            if k == 0 && i == j {
                T::one()
            } else {
                T::zero()
            }
        }))
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.dims.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let o = self.dims.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn frontal_slice(&self, k: usize) -> DMatrix<T> {
        let len = self.dims.n1 * self.dims.n2;
        DMatrix::from_column_slice(
            self.dims.n1,
            self.dims.n2,
            &self.data[k * len..(k + 1) * len],
        )
    }

    /// Lateral slice `A(:, j, :)` as an `n1 x 1 x n3` tensor.
    pub fn lateral_slice(&self, j: usize) -> Self {
        let dims = Dims {
            n1: self.dims.n1,
            n2: 1,
            n3: self.dims.n3,
        };
        Self::from_fn(dims, |i, _, k| self.get(i, j, k))
    }

    pub fn tube(&self, i: usize, j: usize) -> Vec<T> {
        (0..self.dims.n3).map(|k| self.get(i, j, k)).collect()
    }

    pub fn frobenius_norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc.max(x.mag()))
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_same(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: T, other: &Self) -> Result<()> {
        self.check_same(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Largest Fourier-domain column norm `max_{j,k} |Â(:, j, k)|`.
    pub fn max_tube_norm(&self) -> T {
        let fa = fft3(self);
        let mut best = T::zero();
        for s in fa.slices() {
            for col in s.column_iter() {
                let n = col
                    .iter()
                    .fold(T::zero(), |acc, z| acc + crate::scalar::norm_sqr(*z))
                    .sqrt();
                best = best.max(n);
            }
        }
        best
    }

    /// Frontal slices stacked vertically: an `n1*n3 x n2` matrix.
    pub fn unfold(&self) -> DMatrix<T> {
        let Dims { n1, n2, n3 } = self.dims;
        DMatrix::from_fn(n1 * n3, n2, |r, j| self.get(r % n1, j, r / n1))
    }

    /// Inverse of [`Tensor3::unfold`] for a given tube length.
    pub fn fold(m: &DMatrix<T>, n3: usize) -> Result<Self> {
        if n3 == 0 || !m.nrows().is_multiple_of(n3) {
            return Err(Error::ShapeMismatch(format!(
                "{} rows do not split into {n3} slices",
                m.nrows()
            )));
        }
        let dims = Dims::new(m.nrows() / n3, m.ncols(), n3)?;
        Ok(Self::from_fn(dims, |i, j, k| m[(k * dims.n1 + i, j)]))
    }

    /// Block-circulant matrix of the frontal slices. Only meant for
    /// small oracle checks; errors when either side exceeds [`BCIRC_LIMIT`].
    pub fn bcirc(&self) -> Result<DMatrix<T>> {
        let Dims { n1, n2, n3 } = self.dims;
        if n1 * n3 > BCIRC_LIMIT || n2 * n3 > BCIRC_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "bcirc of a {} tensor exceeds the {BCIRC_LIMIT} side limit",
                self.dims
            )));
        }
        Ok(DMatrix::from_fn(n1 * n3, n2 * n3, |r, c| {
            let (bi, i) = (r / n1, r % n1);
            let (bj, j) = (c / n2, c % n2);
            self.get(i, j, (bi + n3 - bj) % n3)
        }))
    }

    /// Transpose every frontal slice and reverse slices 2..n3.
    pub fn conj_transpose(&self) -> Self {
        let Dims { n1, n2, n3 } = self.dims;
        let dims = Dims { n1: n2, n2: n1, n3 };
        Self::from_fn(dims, |j, i, k| self.get(i, j, (n3 - k) % n3))
    }

    /// t-product `self * rhs`, computed slice-wise in the Fourier domain.
    pub fn tprod(&self, rhs: &Self) -> Result<Self> {
        let (a, b) = (self.dims, rhs.dims);
        if a.n2 != b.n1 || a.n3 != b.n3 {
            return Err(Error::ShapeMismatch(format!("t-product of {a} and {b}")));
        }
        let fa = fft3(self);
        let fb = fft3(rhs);
        let out = Dims {
            n1: a.n1,
            n2: b.n2,
            n3: a.n3,
        };
        let fc = FourierTensor::from_half_spectrum(out, |k| &fa.slices()[k] * &fb.slices()[k]);
        ifft3(&fc)
    }

    /// Checks `Q^* * Q = I` (and `Q * Q^* = I` when square) to within `tol`
    /// in Frobenius norm.
    pub fn is_orthogonal(&self, tol: T) -> bool {
        let Dims { n1, n2, n3 } = self.dims;
        let qt = self.conj_transpose();
        let close = |p: Result<Self>, n: usize| -> bool {
            match (p, Self::identity(n, n3)) {
                (Ok(p), Ok(id)) => p.sub(&id).map(|d| d.frobenius_norm() <= tol).unwrap_or(false),
                _ => false,
            }
        };
        if !close(qt.tprod(self), n2) {
            return false;
        }
        n1 != n2 || close(self.tprod(&qt), n1)
    }
}
