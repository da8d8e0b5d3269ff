//! Monte Carlo estimates of the tensor restricted isometry constant.
//!
//! `δ_r` is the smallest `δ` with `(1-δ)|X|² <= |Φ(X)|² <= (1+δ)|X|²` for
//! all `X` of tubal rank at most `r`. Computing it exactly is intractable,
//! so [`empirical_delta`] maximises over random unit-norm probes and
//! therefore returns a lower bound on `δ_r`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fourier::{fft3, ifft3, is_self_conjugate, FourierTensor};
use crate::operators::{Ensemble, MeasurementMap};
use crate::scalar::{Complex, Scalar};
use crate::tensor::{Dims, Tensor3};

pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_TRIALS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TripStudyConfig {
    pub dims: Dims,
    pub rank: usize,
    pub n_samples: usize,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub ensemble: Ensemble,
    pub seed: u64,
}

impl TripStudyConfig {
    pub fn new(dims: Dims, rank: usize, m_grid: Vec<usize>, seed: u64) -> Self {
        Self {
            dims,
            rank,
            n_samples: DEFAULT_SAMPLES,
            m_grid,
            trials: DEFAULT_TRIALS,
            ensemble: Ensemble::Gaussian,
            seed,
        }
    }

    /// `r·r·n3 + n1·r·n3 + n2·r·n3`, the number of free parameters of
    /// a tubal-rank-`r` tensor; the measurement count scales with it.
    pub fn dimension_count(&self) -> usize {
        let Dims { n1, n2, n3 } = self.dims;
        let r = self.rank;
        r * r * n3 + n1 * r * n3 + n2 * r * n3
    }

    pub fn validate(&self) -> Result<()> {
        check_rank(self.dims, self.rank)?;
        if self.n_samples == 0 || self.trials == 0 {
            return Err(Error::InvalidArgument(
                "samples and trials must be positive".into(),
            ));
        }
        if self.m_grid.is_empty() || self.m_grid.contains(&0) {
            return Err(Error::InvalidArgument(
                "m grid must hold positive counts".into(),
            ));
        }
        Ok(())
    }
}

fn check_rank(dims: Dims, r: usize) -> Result<()> {
    let max = dims.min_side();
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    Ok(())
}

fn gaussian<T: Scalar, R: Rng>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Orthonormal `n x r` columns from the QR of a Gaussian matrix, real when
/// `real` is set.
fn orthonormal<T: Scalar, R: Rng>(n: usize, r: usize, real: bool, rng: &mut R) -> DMatrix<Complex<T>> {
    let g = DMatrix::from_fn(n, r, |_, _| {
        let re = gaussian(rng);
        let im = if real { T::zero() } else { gaussian(rng) };
        Complex::new(re, im)
    });
    g.qr().q()
}

/// A random unit-norm tensor of tubal rank `r`: `U * S * V^T` with
/// orthonormal lateral slices drawn per Fourier slice and a Gaussian
/// f-diagonal `S`.
pub fn sample_rank_r_unit<T: Scalar, R: Rng>(dims: Dims, r: usize, rng: &mut R) -> Result<Tensor3<T>> {
    check_rank(dims, r)?;
    let Dims { n1, n2, n3 } = dims;
    let s = Tensor3::from_fn(Dims::new(r, r, n3)?, |i, j, _| {
        if i == j {
            gaussian(rng)
        } else {
            T::zero()
        }
    });
    let sh = fft3(&s);
    let spectrum = FourierTensor::from_half_spectrum(dims, |k| {
        let real = is_self_conjugate(k, n3);
        let u = orthonormal::<T, R>(n1, r, real, rng);
        let v = orthonormal::<T, R>(n2, r, real, rng);
        let mut us = u;
        for i in 0..r {
            let d = sh.slices()[k][(i, i)];
            us.column_mut(i).iter_mut().for_each(|z| *z *= d);
        }
        &us * v.adjoint()
    });
    let x = ifft3(&spectrum)?;
    let norm = x.frobenius_norm();
    if norm == T::zero() {
        return Err(Error::NumericalFailure(0));
    }
    Ok(x.scale(T::one() / norm))
}

/// `max_i | |Φ(X_i)|² - 1 |` over `n_samples` unit probes of tubal rank
/// `r`. A lower bound on `δ_r`.
pub fn empirical_delta<T: Scalar, R: Rng>(
    phi: &MeasurementMap<T>,
    dims: Dims,
    r: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<T> {
    let probes = (0..n_samples)
        .map(|_| sample_rank_r_unit(dims, r, rng))
        .collect::<Result<Vec<_>>>()?;
    delta_over(phi, dims, &probes)
}

/// [`empirical_delta`] over a fixed probe set.
pub fn delta_over<T: Scalar>(phi: &MeasurementMap<T>, dims: Dims, probes: &[Tensor3<T>]) -> Result<T> {
    if phi.dims() != dims {
        return Err(Error::ShapeMismatch(format!(
            "map acts on {} tensors, probes are {dims}",
            phi.dims()
        )));
    }
    let mut worst = T::zero();
    for x in probes {
        let y = phi.apply(x)?;
        let gap = (y.norm_squared() - x.norm_sqr()).mag();
        worst = worst.max(gap);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub m: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub trials: usize,
    pub samples: usize,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    /// Number of places where the median rises along the grid.
    pub fn inversions(&self) -> usize {
        self.rows
            .windows(2)
            .filter(|w| w[1].median > w[0].median)
            .count()
    }

    /// Least-squares slope of `log(median)` against `log(m)`; `None` with
    /// fewer than two grid points or a zero median.
    pub fn log_log_slope(&self) -> Option<f64> {
        if self.rows.len() < 2 || self.rows.iter().any(|r| r.median <= 0.0) {
            return None;
        }
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| ((r.m as f64).ln(), r.median.ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    /// Header `m,delta_median,delta_q1,delta_q3,trials,samples`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,delta_median,delta_q1,delta_q3,trials,samples\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.15e},{:.15e},{:.15e},{},{}",
                r.m, r.median, r.q1, r.q3, r.trials, r.samples
            );
        }
        out
    }
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Seed of the probe stream for one trial, kept apart from the map seed.
fn probe_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
    rng.set_stream(1);
    rng
}

/// For every `m` in the grid, draws `trials` maps (seed `seed + trial`)
/// and reports quartiles of `δ̂`. Each trial uses one probe set for the
/// whole grid.
pub fn scaling_study<T: Scalar>(cfg: &TripStudyConfig) -> Result<StudyTable> {
    cfg.validate()?;
    let probes: Vec<Vec<Tensor3<T>>> = (0..cfg.trials)
        .map(|t| {
            let mut rng = probe_rng(cfg.seed, t);
            (0..cfg.n_samples)
                .map(|_| sample_rank_r_unit(cfg.dims, cfg.rank, &mut rng))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(cfg.m_grid.len());
    for &m in &cfg.m_grid {
        let mut deltas = Vec::with_capacity(cfg.trials);
        for (t, set) in probes.iter().enumerate() {
            let seed = cfg.seed.wrapping_add(t as u64);
            let phi = MeasurementMap::<T>::from_ensemble(cfg.ensemble, m, cfg.dims, seed)?;
            deltas.push(delta_over(&phi, cfg.dims, set)?.as_f64());
        }
        let mut sorted = deltas.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        rows.push(StudyRow {
            m,
            median: quantile(&sorted, 0.5),
            q1: quantile(&sorted, 0.25),
            q3: quantile(&sorted, 0.75),
            trials: cfg.trials,
            samples: cfg.n_samples,
            deltas,
        });
    }
    Ok(StudyTable { rows })
}
