//! Linear measurement maps `Φ: R^{n1 x n2 x n3} -> R^m`.
//!
//! Two kinds exist: entry sampling on an index set `Ω` (tensor
//! completion) and a dense matrix applied to the vectorised tensor
//! (tensor sensing). Besides `apply` and the minimum-norm right inverse,
//! every map exposes *measured coordinates*: a vector `c(X)` with
//! `<c(X), c(Z)> = <Φ⁻¹Φ(X), Φ⁻¹Φ(Z)>`. The pursuit solves its least
//! squares problems in these coordinates, which for sampling maps are just
//! the observed entries.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor3};

/// Upper bound on the number of entries of a dense measurement matrix.
pub const DENSE_ENTRY_LIMIT: usize = 1 << 24;

/// Strictly increasing, nonempty set of linear entry offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    dims: Dims,
    indices: Vec<usize>,
}

impl SamplingMask {
    pub fn new(dims: Dims, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyMask);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMask("offsets must be strictly increasing".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= dims.numel() {
                return Err(Error::InvalidMask(format!(
                    "offset {last} outside a {dims} tensor"
                )));
            }
        }
        Ok(Self { dims, indices })
    }

    /// Every entry observed.
    pub fn full(dims: Dims) -> Self {
        Self {
            dims,
            indices: (0..dims.numel()).collect(),
        }
    }

    /// Keeps `ceil((1 - missing_ratio) * N)` entries drawn uniformly
    /// without replacement.
    pub fn random(dims: Dims, missing_ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&missing_ratio) {
            return Err(Error::InvalidArgument(format!(
                "missing ratio {missing_ratio} outside [0, 1)"
            )));
        }
        let n = dims.numel();
        // the small offset keeps e.g. (1 - 0.7) * 10 from rounding up to 4
        let keep = (((1.0 - missing_ratio) * n as f64) - 1e-9).ceil().max(0.0) as usize;
        if keep == 0 {
            return Err(Error::EmptyMask);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices = index::sample(&mut rng, n, keep.min(n)).into_vec();
        indices.sort_unstable();
        Self::new(dims, indices)
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `P_Ω(x)`: keeps the sampled entries, zeroes the rest.
    pub fn project<T: Scalar>(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        check_dims(self.dims, x.dims())?;
        let mut data = vec![T::zero(); self.dims.numel()];
        for &o in &self.indices {
            data[o] = x.data()[o];
        }
        Tensor3::from_vec(self.dims, data)
    }
}

/// Seeded mask helper with the argument order used by the CLI.
pub fn random_mask(dims: Dims, missing_ratio: f64, seed: u64) -> Result<SamplingMask> {
    SamplingMask::random(dims, missing_ratio, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ensemble {
    /// i.i.d. `N(0, 1/m)` entries.
    Gaussian,
    /// i.i.d. `±1/sqrt(m)` entries.
    Rademacher,
    Identity,
    Custom,
}

impl Ensemble {
    pub fn name(&self) -> &'static str {
        match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Rademacher => "rademacher",
            Ensemble::Identity => "identity",
            Ensemble::Custom => "custom",
        }
    }
}

/// Orthogonal factorisation backing the right inverse of a dense map.
#[derive(Debug, Clone)]
enum Geometry<T: Scalar> {
    /// `m <= N`: `φᵀ = Q R`, so `Φ⁻¹(b) = Q R⁻ᵀ b` and `c(X) = Qᵀ vec(X)`.
    Wide { q: DMatrix<T>, r: DMatrix<T> },
    /// `m > N`: `φ = Q R`, so `Φ⁻¹(b) = R⁻¹ Qᵀ b` and `Φ⁻¹Φ` is the identity.
    Tall { q: DMatrix<T>, r: DMatrix<T> },
}

#[derive(Debug, Clone)]
pub struct DenseMap<T: Scalar> {
    phi: DMatrix<T>,
    ensemble: Ensemble,
    seed: Option<u64>,
    geometry: OnceLock<Option<Geometry<T>>>,
}

impl<T: Scalar> DenseMap<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.phi
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn geometry(&self) -> Result<&Geometry<T>> {
        self.geometry
            .get_or_init(|| factor(&self.phi))
            .as_ref()
            .ok_or(Error::RankDeficientMap)
    }
}

fn full_rank_diag<T: Scalar>(r: &DMatrix<T>, scale: usize) -> bool {
    let diag: Vec<T> = r.diagonal().iter().map(|x| x.mag()).collect();
    let top = diag.iter().fold(T::zero(), |a, &b| a.max(b));
    let tol = top * T::eps() * T::lit(scale as f64);
    top > T::zero() && diag.iter().all(|&d| d > tol)
}

fn factor<T: Scalar>(phi: &DMatrix<T>) -> Option<Geometry<T>> {
    let (m, n) = phi.shape();
    let scale = m.max(n);
    if m <= n {
        let qr = phi.transpose().qr();
        let (q, r) = (qr.q(), qr.r());
        full_rank_diag(&r, scale).then_some(Geometry::Wide { q, r })
    } else {
        let qr = phi.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        full_rank_diag(&r, scale).then_some(Geometry::Tall { q, r })
    }
}

#[derive(Debug, Clone)]
pub enum MapKind<T: Scalar> {
    Sampling(SamplingMask),
    Dense(DenseMap<T>),
}

#[derive(Debug, Clone)]
pub struct MeasurementMap<T: Scalar> {
    dims: Dims,
    kind: MapKind<T>,
}

fn check_dims(expected: Dims, got: Dims) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch(format!(
            "map expects {expected}, got {got}"
        )));
    }
    Ok(())
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch(format!(
            "expected {expected} values, got {got}"
        )));
    }
    Ok(())
}

impl<T: Scalar> MeasurementMap<T> {
    pub fn sampling(mask: SamplingMask) -> Self {
        Self {
            dims: mask.dims(),
            kind: MapKind::Sampling(mask),
        }
    }

    /// Dense map from an explicit `m x (n1 n2 n3)` matrix.
    pub fn dense(phi: DMatrix<T>, dims: Dims) -> Result<Self> {
        Self::dense_tagged(phi, dims, Ensemble::Custom, None)
    }

    fn dense_tagged(
        phi: DMatrix<T>,
        dims: Dims,
        ensemble: Ensemble,
        seed: Option<u64>,
    ) -> Result<Self> {
        let (m, n) = phi.shape();
        check_len(dims.numel(), n)?;
        if m == 0 {
            return Err(Error::InvalidArgument("dense map needs at least one row".into()));
        }
        if let Some(pos) = phi.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self {
            dims,
            kind: MapKind::Dense(DenseMap {
                phi,
                ensemble,
                seed,
                geometry: OnceLock::new(),
            }),
        })
    }

    pub fn identity(dims: Dims) -> Result<Self> {
        let n = dims.numel();
        guard(n, n)?;
        Self::dense_tagged(DMatrix::identity(n, n), dims, Ensemble::Identity, None)
    }

    pub fn gaussian(m: usize, dims: Dims, seed: u64) -> Result<Self> {
        let scale = ensemble_scale(m)?;
        let n = dims.numel();
        guard(m, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = DMatrix::from_row_iterator(
            m,
            n,
            (0..m * n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal) * scale)),
        );
        Self::dense_tagged(phi, dims, Ensemble::Gaussian, Some(seed))
    }

    pub fn rademacher(m: usize, dims: Dims, seed: u64) -> Result<Self> {
        let scale = ensemble_scale(m)?;
        let n = dims.numel();
        guard(m, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = DMatrix::from_row_iterator(
            m,
            n,
            (0..m * n).map(|_| T::lit(if rng.random::<bool>() { scale } else { -scale })),
        );
        Self::dense_tagged(phi, dims, Ensemble::Rademacher, Some(seed))
    }

    /// Draws from a named ensemble; `Identity` ignores `m` beyond checking it.
    pub fn from_ensemble(ensemble: Ensemble, m: usize, dims: Dims, seed: u64) -> Result<Self> {
        match ensemble {
            Ensemble::Gaussian => Self::gaussian(m, dims, seed),
            Ensemble::Rademacher => Self::rademacher(m, dims, seed),
            Ensemble::Identity => {
                if m != dims.numel() {
                    return Err(Error::InvalidArgument(format!(
                        "identity map needs m = {}, got {m}",
                        dims.numel()
                    )));
                }
                Self::identity(dims)
            }
            Ensemble::Custom => Err(Error::InvalidArgument(
                "custom maps are built from an explicit matrix".into(),
            )),
        }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn kind(&self) -> &MapKind<T> {
        &self.kind
    }

    /// Number of measurements.
    pub fn m(&self) -> usize {
        match &self.kind {
            MapKind::Sampling(mask) => mask.len(),
            MapKind::Dense(d) => d.phi.nrows(),
        }
    }

    /// `Φ(X)`.
    pub fn apply(&self, x: &Tensor3<T>) -> Result<DVector<T>> {
        check_dims(self.dims, x.dims())?;
        match &self.kind {
            MapKind::Sampling(mask) => Ok(DVector::from_iterator(
                mask.len(),
                mask.indices().iter().map(|&o| x.data()[o]),
            )),
            MapKind::Dense(d) => Ok(&d.phi * DVector::from_column_slice(x.data())),
        }
    }

    /// Minimum-norm `Φ⁻¹(b)`.
    pub fn pinv_apply(&self, b: &DVector<T>) -> Result<Tensor3<T>> {
        self.lift(&self.coords_of_measurements(b)?)
    }

    /// `Φ⁻¹Φ(X)`: `P_Ω` for sampling maps, the orthogonal projector onto
    /// the row space of `φ` for dense ones.
    pub fn project(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.lift(&self.coords(x)?)
    }

    /// Length of the measured coordinate vectors.
    pub fn coord_len(&self) -> Result<usize> {
        match &self.kind {
            MapKind::Sampling(mask) => Ok(mask.len()),
            MapKind::Dense(d) => Ok(match d.geometry()? {
                Geometry::Wide { q, .. } => q.ncols(),
                Geometry::Tall { .. } => self.dims.numel(),
            }),
        }
    }

    /// Measured coordinates of `Φ⁻¹Φ(X)`.
    pub fn coords(&self, x: &Tensor3<T>) -> Result<DVector<T>> {
        check_dims(self.dims, x.dims())?;
        match &self.kind {
            MapKind::Sampling(mask) => Ok(DVector::from_iterator(
                mask.len(),
                mask.indices().iter().map(|&o| x.data()[o]),
            )),
            MapKind::Dense(d) => {
                let v = DVector::from_column_slice(x.data());
                Ok(match d.geometry()? {
                    Geometry::Wide { q, .. } => q.tr_mul(&v),
                    Geometry::Tall { .. } => v,
                })
            }
        }
    }

    /// Measured coordinates of `Φ⁻¹(b)`.
    pub fn coords_of_measurements(&self, b: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.m(), b.len())?;
        match &self.kind {
            MapKind::Sampling(_) => Ok(b.clone()),
            MapKind::Dense(d) => match d.geometry()? {
                Geometry::Wide { r, .. } => r
                    .transpose()
                    .solve_lower_triangular(b)
                    .ok_or(Error::RankDeficientMap),
                Geometry::Tall { q, r } => r
                    .solve_upper_triangular(&q.tr_mul(b))
                    .ok_or(Error::RankDeficientMap),
            },
        }
    }

    /// Tensor with the given measured coordinates.
    pub fn lift(&self, c: &DVector<T>) -> Result<Tensor3<T>> {
        check_len(self.coord_len()?, c.len())?;
        match &self.kind {
            MapKind::Sampling(mask) => {
                let mut data = vec![T::zero(); self.dims.numel()];
                for (&o, &v) in mask.indices().iter().zip(c.iter()) {
                    data[o] = v;
                }
                Tensor3::from_vec(self.dims, data)
            }
            MapKind::Dense(d) => {
                let v = match d.geometry()? {
                    Geometry::Wide { q, .. } => q * c,
                    Geometry::Tall { .. } => c.clone(),
                };
                Tensor3::from_vec(self.dims, v.as_slice().to_vec())
            }
        }
    }
}

fn ensemble_scale(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    Ok(1.0 / (m as f64).sqrt())
}

fn guard(m: usize, n: usize) -> Result<()> {
    if m.saturating_mul(n) > DENSE_ENTRY_LIMIT {
        return Err(Error::MapTooLarge {
            rows: m,
            cols: n,
            limit: DENSE_ENTRY_LIMIT,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(n1: usize, n2: usize, n3: usize) -> Dims {
        Dims::new(n1, n2, n3).unwrap()
    }

    fn ramp(dims: Dims) -> Tensor3<f64> {
        Tensor3::from_fn(dims, |i, j, k| (i as f64) - 2.0 * j as f64 + 0.5 * k as f64 + 0.25)
    }

    #[test]
    fn full_mask_is_vectorisation() {
        let dims = d(2, 3, 2);
        let x = ramp(dims);
        let phi = MeasurementMap::sampling(SamplingMask::full(dims));
        assert_eq!(phi.apply(&x).unwrap().as_slice(), x.data());
        let id = MeasurementMap::identity(dims).unwrap();
        assert_eq!(id.apply(&x).unwrap().as_slice(), x.data());
        let back = id.pinv_apply(&id.apply(&x).unwrap()).unwrap();
        assert!(back.sub(&x).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn zero_in_zero_out() {
        let dims = d(2, 2, 2);
        let z = Tensor3::<f64>::zeros(dims);
        let g = MeasurementMap::gaussian(5, dims, 3).unwrap();
        assert!(g.apply(&z).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_right_inverse_is_projector() {
        let dims = d(3, 3, 2);
        let mask = SamplingMask::random(dims, 0.5, 7).unwrap();
        let phi = MeasurementMap::sampling(mask.clone());
        let x = ramp(dims);
        let px = phi.pinv_apply(&phi.apply(&x).unwrap()).unwrap();
        assert_eq!(px, mask.project(&x).unwrap());
        assert_eq!(phi.project(&px).unwrap(), px);
        assert!(px.frobenius_norm() <= x.frobenius_norm());
    }

    #[test]
    fn dense_right_inverse_residual() {
        let dims = d(2, 3, 4);
        let phi = MeasurementMap::<f64>::gaussian(10, dims, 42).unwrap();
        let b = DVector::from_fn(10, |i, _| (i as f64 * 0.37).sin());
        let x = phi.pinv_apply(&b).unwrap();
        let back = phi.apply(&x).unwrap();
        assert!((back - &b).norm() <= 1e-8 * b.norm());
        // minimum norm: x lies in the row space, so projecting leaves it alone
        let px = phi.project(&x).unwrap();
        assert!(px.sub(&x).unwrap().frobenius_norm() < 1e-10 * x.frobenius_norm());
    }

    #[test]
    fn coordinates_preserve_projected_geometry() {
        let dims = d(2, 2, 3);
        let phi = MeasurementMap::<f64>::gaussian(7, dims, 1).unwrap();
        let x = ramp(dims);
        let c = phi.coords(&x).unwrap();
        let p = phi.project(&x).unwrap();
        assert!((c.norm() - p.frobenius_norm()).abs() < 1e-12);
        let tall = MeasurementMap::<f64>::gaussian(20, dims, 1).unwrap();
        let b = tall.apply(&x).unwrap();
        let back = tall.pinv_apply(&b).unwrap();
        assert!(back.sub(&x).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn rank_deficient_dense_map() {
        let dims = d(1, 2, 2);
        let mut phi = DMatrix::<f64>::zeros(2, 4);
        phi[(0, 0)] = 1.0;
        phi[(1, 0)] = 2.0;
        let map = MeasurementMap::dense(phi, dims).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(map.pinv_apply(&b).unwrap_err(), Error::RankDeficientMap);
    }

    #[test]
    fn ensembles_are_seeded() {
        let dims = d(3, 2, 2);
        let a = MeasurementMap::<f64>::gaussian(6, dims, 9).unwrap();
        let b = MeasurementMap::<f64>::gaussian(6, dims, 9).unwrap();
        let c = MeasurementMap::<f64>::rademacher(6, dims, 9).unwrap();
        let (MapKind::Dense(a), MapKind::Dense(b), MapKind::Dense(c)) = (a.kind(), b.kind(), c.kind())
        else {
            panic!("dense maps expected")
        };
        assert_eq!(a.matrix(), b.matrix());
        let s = 1.0 / 6f64.sqrt();
        assert!(c.matrix().iter().all(|&v| v == s || v == -s));
        assert!(MeasurementMap::<f64>::gaussian(0, dims, 1).is_err());
    }

    #[test]
    fn memory_guard() {
        let dims = d(64, 64, 64);
        assert!(matches!(
            MeasurementMap::<f64>::gaussian(65, dims, 0),
            Err(Error::MapTooLarge { .. })
        ));
    }

    #[test]
    fn mask_counts_and_validation() {
        let dims = d(5, 4, 2);
        assert_eq!(SamplingMask::random(dims, 0.5, 1).unwrap().len(), 20);
        assert_eq!(SamplingMask::random(dims, 0.0, 1).unwrap().len(), 40);
        assert_eq!(SamplingMask::random(dims, 0.7, 1).unwrap().len(), 12);
        assert_eq!(
            SamplingMask::random(dims, 0.3, 4).unwrap(),
            SamplingMask::random(dims, 0.3, 4).unwrap()
        );
        assert_eq!(SamplingMask::random(dims, 1.0, 1).unwrap_err(), Error::EmptyMask);
        assert!(SamplingMask::random(dims, 1.5, 1).is_err());
        assert_eq!(SamplingMask::new(dims, vec![]).unwrap_err(), Error::EmptyMask);
        assert!(SamplingMask::new(dims, vec![3, 3]).is_err());
        assert!(SamplingMask::new(dims, vec![40]).is_err());
    }

    #[test]
    fn shape_errors() {
        let phi = MeasurementMap::<f64>::sampling(SamplingMask::full(d(2, 2, 2)));
        let x = Tensor3::<f64>::zeros(d(2, 2, 3));
        assert!(matches!(phi.apply(&x), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            phi.pinv_apply(&DVector::zeros(3)),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
