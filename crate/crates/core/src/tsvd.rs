//! t-SVD, tubal rank and the unit-norm rank-one atoms used by the pursuit.
//!
//! Each Fourier slice gets an ordinary thin SVD. Only the first
//! `n3 / 2 + 1` slices are factored; the rest follow by conjugation. The
//! slices that are real for a real input (DC and, for even `n3`, Nyquist)
//! use a real SVD so that their factors stay exactly real.
//!
//! Singular values are sorted descending inside every slice, and the
//! entry of largest modulus (first one on ties) of every left singular
//! vector is rotated to be real and nonnegative.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fourier::{fft3, half_len, ifft3, is_self_conjugate, FourierTensor};
use crate::scalar::{norm_sqr, Complex, Scalar};
use crate::tensor::{Dims, Tensor3};

/// Factors `U`, `S`, `V` with `A = U * S * V^T`.
#[derive(Debug, Clone)]
pub struct TsvdFactors<T: Scalar> {
    pub u: Tensor3<T>,
    pub s: Tensor3<T>,
    pub v: Tensor3<T>,
}

impl<T: Scalar> TsvdFactors<T> {
    /// Number of retained singular tubes.
    pub fn width(&self) -> usize {
        self.s.dims().n1
    }

    pub fn reconstruct(&self) -> Result<Tensor3<T>> {
        self.u.tprod(&self.s)?.tprod(&self.v.conj_transpose())
    }

    /// `|S(i, i, :)|_F` for every retained tube.
    pub fn tube_norms(&self) -> Vec<T> {
        (0..self.width())
            .map(|i| {
                self.s
                    .tube(i, i)
                    .iter()
                    .fold(T::zero(), |acc, &x| acc + x * x)
                    .sqrt()
            })
            .collect()
    }
}

/// A unit Frobenius norm tensor `U(:,i,:) * S(i,i,:)/|S(i,i,:)| * V(:,i,:)^T`.
#[derive(Debug, Clone)]
pub struct RankOneAtom<T: Scalar> {
    /// Lateral slice `U(:, i, :)`, size `n1 x 1 x n3`.
    pub u: Tensor3<T>,
    /// Lateral slice `V(:, i, :)`, size `n2 x 1 x n3`.
    pub v: Tensor3<T>,
    /// `|S(i, i, :)|_F`; also equal to `<atom, A>` for the factored `A`.
    pub tube_norm: T,
    pub atom: Tensor3<T>,
}

/// Half-spectrum slice factorisations of a tensor.
#[derive(Debug, Clone)]
struct SliceFactors<T: Scalar> {
    dims: Dims,
    u: Vec<DMatrix<Complex<T>>>,
    sigma: Vec<Vec<T>>,
    v: Vec<DMatrix<Complex<T>>>,
}

impl<T: Scalar> SliceFactors<T> {
    fn compute(a: &Tensor3<T>) -> Result<Self> {
        let dims = a.dims();
        let fa = fft3(a);
        let h = half_len(dims.n3).min(dims.n3);
        let mut u = Vec::with_capacity(h);
        let mut sigma = Vec::with_capacity(h);
        let mut v = Vec::with_capacity(h);
        for k in 0..h {
            let slice = &fa.slices()[k];
            let (uk, sk, vk) = if is_self_conjugate(k, dims.n3) {
                real_slice_svd(slice, k)?
            } else {
                complex_slice_svd(slice, k)?
            };
            u.push(uk);
            sigma.push(sk);
            v.push(vk);
        }
        Ok(Self { dims, u, sigma, v })
    }

    fn width(&self) -> usize {
        self.dims.min_side()
    }

    /// `|S(i, i, :)|_F`, using `|x|_F = |fft(x)|_F / sqrt(n3)`.
    fn tube_norms(&self) -> Vec<T> {
        let n3 = self.dims.n3;
        (0..self.width())
            .map(|i| {
                let mut acc = T::zero();
                for k in 0..n3 {
                    let s = self.sigma[fold_index(k, n3)][i];
                    acc += s * s;
                }
                (acc / T::lit(n3 as f64)).sqrt()
            })
            .collect()
    }

    fn factors(&self, width: usize) -> Result<TsvdFactors<T>> {
        let Dims { n1, n2, n3 } = self.dims;
        let zero = Complex::new(T::zero(), T::zero());
        let fu = FourierTensor::from_half_spectrum(Dims { n1, n2: width, n3 }, |k| {
            self.u[k].columns(0, width).into_owned()
        });
        let fv = FourierTensor::from_half_spectrum(Dims { n1: n2, n2: width, n3 }, |k| {
            self.v[k].columns(0, width).into_owned()
        });
        let fs = FourierTensor::from_half_spectrum(
            Dims {
                n1: width,
                n2: width,
                n3,
            },
            |k| {
                DMatrix::from_fn(width, width, |i, j| {
                    if i == j {
                        Complex::new(self.sigma[k][i], T::zero())
                    } else {
                        zero
                    }
                })
            },
        );
        Ok(TsvdFactors {
            u: ifft3(&fu)?,
            s: ifft3(&fs)?,
            v: ifft3(&fv)?,
        })
    }

    fn atom(&self, i: usize, tube_norm: T) -> Result<RankOneAtom<T>> {
        let Dims { n1, n2, n3 } = self.dims;
        let fm = FourierTensor::from_half_spectrum(self.dims, |k| {
            let w = Complex::new(self.sigma[k][i] / tube_norm, T::zero());
            let uc = self.u[k].column(i) * w;
            uc * self.v[k].column(i).adjoint()
        });
        let fu = FourierTensor::from_half_spectrum(Dims { n1, n2: 1, n3 }, |k| {
            self.u[k].columns(i, 1).into_owned()
        });
        let fv = FourierTensor::from_half_spectrum(Dims { n1: n2, n2: 1, n3 }, |k| {
            self.v[k].columns(i, 1).into_owned()
        });
        Ok(RankOneAtom {
            u: ifft3(&fu)?,
            v: ifft3(&fv)?,
            tube_norm,
            atom: ifft3(&fm)?,
        })
    }
}

/// Maps a Fourier slice index onto the stored half spectrum.
#[inline]
fn fold_index(k: usize, n3: usize) -> usize {
    k.min(n3 - k)
}

/// Rejects a factorisation whose singular values do not carry the
/// slice's Frobenius energy.
fn check_energy<T: Scalar>(fro_sq: T, sigma: &[T], k: usize) -> Result<()> {
    let energy = sigma.iter().fold(T::zero(), |acc, &s| acc + s * s);
    if (energy - fro_sq).mag() > T::lit(1e3) * T::eps() * fro_sq {
        return Err(Error::NumericalFailure(k));
    }
    Ok(())
}

type SliceSvd<T> = (DMatrix<Complex<T>>, Vec<T>, DMatrix<Complex<T>>);

fn real_slice_svd<T: Scalar>(slice: &DMatrix<Complex<T>>, k: usize) -> Result<SliceSvd<T>> {
    let re = slice.map(|z| z.re);
    let (u, sigma, v) = T::svd_real(&re).ok_or(Error::NumericalFailure(k))?;
    check_energy(re.norm_squared(), &sigma, k)?;
    let to_c = |m: &DMatrix<T>| m.map(|x| Complex::new(x, T::zero()));
    Ok(normalise(to_c(&u), sigma, to_c(&v)))
}

fn complex_slice_svd<T: Scalar>(slice: &DMatrix<Complex<T>>, k: usize) -> Result<SliceSvd<T>> {
    let fro_sq = slice.iter().fold(T::zero(), |acc, z| acc + norm_sqr(*z));
    let (u, sigma, v) = T::svd_complex(slice).ok_or(Error::NumericalFailure(k))?;
    check_energy(fro_sq, &sigma, k)?;
    Ok(normalise(u, sigma, v))
}

/// Sorts singular triplets descending and fixes each left vector's phase.
fn normalise<T: Scalar>(
    u: DMatrix<Complex<T>>,
    sigma: Vec<T>,
    v: DMatrix<Complex<T>>,
) -> SliceSvd<T> {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| {
        sigma[b]
            .partial_cmp(&sigma[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut us = DMatrix::zeros(u.nrows(), order.len());
    let mut vs = DMatrix::zeros(v.nrows(), order.len());
    let mut ss = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        let ucol = u.column(src);
        let mut best = 0;
        let mut best_mag = T::zero();
        for (r, z) in ucol.iter().enumerate() {
            let m = norm_sqr(*z);
            if m > best_mag {
                best = r;
                best_mag = m;
            }
        }
        let phase = if best_mag > T::zero() {
            let z = ucol[best];
            let n = best_mag.sqrt();
            Complex::new(z.re / n, -z.im / n)
        } else {
            Complex::new(T::one(), T::zero())
        };
        us.set_column(dst, &(ucol * phase));
        vs.set_column(dst, &(v.column(src) * phase));
        ss.push(sigma[src]);
    }
    (us, ss, vs)
}

/// Full t-SVD with `min(n1, n2)` singular tubes.
pub fn tsvd<T: Scalar>(a: &Tensor3<T>) -> Result<TsvdFactors<T>> {
    let f = SliceFactors::compute(a)?;
    f.factors(f.width())
}

/// t-SVD truncated to the `k` leading singular tubes.
pub fn truncated_tsvd<T: Scalar>(a: &Tensor3<T>, k: usize) -> Result<TsvdFactors<T>> {
    let max = a.dims().min_side();
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { rank: k, max });
    }
    SliceFactors::compute(a)?.factors(k)
}

/// Number of singular tubes with norm above `rel_tol` times the leading one.
pub fn tubal_rank<T: Scalar>(a: &Tensor3<T>, rel_tol: T) -> Result<usize> {
    let norms = SliceFactors::compute(a)?.tube_norms();
    Ok(count_nonzero(&norms, rel_tol))
}

/// [`tubal_rank`] at the default relative tolerance.
pub fn tubal_rank_default<T: Scalar>(a: &Tensor3<T>) -> Result<usize> {
    tubal_rank(a, T::rank_tol())
}

fn count_nonzero<T: Scalar>(norms: &[T], rel_tol: T) -> usize {
    match norms.first() {
        Some(&lead) if lead > T::zero() => norms.iter().filter(|&&n| n > rel_tol * lead).count(),
        _ => 0,
    }
}

/// The `s` leading unit-norm rank-one atoms of `a`. Tubes below
/// `T::rank_tol()` times the leading tube norm are dropped, so fewer than
/// `s` atoms come back for tensors of lower tubal rank.
pub fn leading_atoms<T: Scalar>(a: &Tensor3<T>, s: usize) -> Result<Vec<RankOneAtom<T>>> {
    leading_atoms_with_tol(a, s, T::rank_tol())
}

pub fn leading_atoms_with_tol<T: Scalar>(
    a: &Tensor3<T>,
    s: usize,
    rel_tol: T,
) -> Result<Vec<RankOneAtom<T>>> {
    let max = a.dims().min_side();
    if s == 0 || s > max {
        return Err(Error::RankOutOfRange { rank: s, max });
    }
    let f = SliceFactors::compute(a)?;
    let norms = f.tube_norms();
    let keep = count_nonzero(&norms[..s], rel_tol);
    (0..keep).map(|i| f.atom(i, norms[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: Dims, seed: u64) -> Tensor3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn d(n1: usize, n2: usize, n3: usize) -> Dims {
        Dims::new(n1, n2, n3).unwrap()
    }

    fn rel(a: &Tensor3<f64>, b: &Tensor3<f64>) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn identity_factors() {
        let id = Tensor3::<f64>::identity(2, 3).unwrap();
        let f = tsvd(&id).unwrap();
        assert!(f.s.sub(&id).unwrap().frobenius_norm() < 1e-12);
        assert!(rel(&f.reconstruct().unwrap(), &id) < 1e-12);
        assert_eq!(tubal_rank_default(&id).unwrap(), 2);
    }

    #[test]
    fn zero_tensor() {
        let z = Tensor3::<f64>::zeros(d(3, 2, 4));
        let f = tsvd(&z).unwrap();
        assert_eq!(f.s.frobenius_norm(), 0.0);
        assert_eq!(tubal_rank_default(&z).unwrap(), 0);
        assert!(leading_atoms(&z, 2).unwrap().is_empty());
    }

    #[test]
    fn random_reconstruction_and_orthogonality() {
        for (n, seed) in [(d(4, 3, 2), 1), (d(3, 5, 4), 2), (d(2, 2, 1), 3), (d(5, 5, 5), 4)] {
            let a = random(n, seed);
            let f = tsvd(&a).unwrap();
            assert!(rel(&f.reconstruct().unwrap(), &a) < 1e-8);
            assert!(f.u.is_orthogonal(1e-8));
            assert!(f.v.is_orthogonal(1e-8));
            // f-diagonal with exactly zero off-diagonal entries
            for k in 0..n.n3 {
                for i in 0..f.width() {
                    for j in 0..f.width() {
                        if i != j {
                            assert_eq!(f.s.get(i, j, k), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sign_convention_is_reproducible() {
        let a = random(d(4, 3, 3), 9);
        let f1 = tsvd(&a).unwrap();
        let f2 = tsvd(&a.clone()).unwrap();
        assert_eq!(f1.u, f2.u);
        assert_eq!(f1.v, f2.v);
    }

    #[test]
    fn truncation_errors_and_monotone_error() {
        let a = random(d(4, 5, 3), 5);
        assert!(matches!(truncated_tsvd(&a, 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(truncated_tsvd(&a, 5), Err(Error::RankOutOfRange { .. })));
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let approx = truncated_tsvd(&a, k).unwrap().reconstruct().unwrap();
            let err = a.sub(&approx).unwrap().frobenius_norm();
            assert!(err <= prev * (1.0 + 1e-12));
            prev = err;
        }
        assert!(prev < 1e-10);
        let full = tsvd(&a).unwrap();
        let t4 = truncated_tsvd(&a, 4).unwrap();
        assert_eq!(full.u, t4.u);
        assert_eq!(full.s, t4.s);
    }

    #[test]
    fn rank_two_sum_is_recovered_exactly() {
        let a = random(d(5, 4, 3), 11);
        let atoms = leading_atoms(&a, 2).unwrap();
        let mut y = atoms[0].atom.scale(2.0);
        y.axpy(0.7, &atoms[1].atom).unwrap();
        assert_eq!(tubal_rank_default(&y).unwrap(), 2);
        let y2 = truncated_tsvd(&y, 2).unwrap().reconstruct().unwrap();
        assert!(rel(&y2, &y) < 1e-8);
    }

    #[test]
    fn atoms_are_orthonormal() {
        let a = random(d(6, 5, 4), 3);
        let atoms = leading_atoms(&a, 4).unwrap();
        assert_eq!(atoms.len(), 4);
        for (i, ai) in atoms.iter().enumerate() {
            assert!((ai.atom.frobenius_norm() - 1.0).abs() < 1e-10);
            assert!((ai.atom.inner(&a).unwrap() - ai.tube_norm).abs() < 1e-10);
            for aj in &atoms[i + 1..] {
                assert!(ai.atom.inner(&aj.atom).unwrap().abs() < 1e-8);
            }
        }
        assert!(atoms.windows(2).all(|w| w[0].tube_norm >= w[1].tube_norm));
    }

    #[test]
    fn single_atom_round_trip() {
        let a = random(d(4, 4, 5), 21);
        let m = leading_atoms(&a, 1).unwrap().remove(0);
        let y = m.atom.scale(3.7);
        assert_eq!(tubal_rank_default(&y).unwrap(), 1);
        let back = leading_atoms(&y, 2).unwrap();
        assert_eq!(back.len(), 1);
        let rebuilt = back[0].atom.scale(back[0].tube_norm);
        assert!(rel(&rebuilt, &y) < 1e-10);
        // atom = u * (s / |s|) * v^T with the stored lateral slices
        let tube = Tensor3::from_vec(d(1, 1, 5), {
            let f = tsvd(&y).unwrap();
            f.s.tube(0, 0).iter().map(|x| x / back[0].tube_norm).collect()
        })
        .unwrap();
        let expanded = back[0]
            .u
            .tprod(&tube)
            .unwrap()
            .tprod(&back[0].v.conj_transpose())
            .unwrap();
        assert!(rel(&expanded, &back[0].atom) < 1e-10);
    }

    #[test]
    fn atom_request_out_of_range() {
        let a = random(d(3, 2, 2), 1);
        assert!(matches!(leading_atoms(&a, 3), Err(Error::RankOutOfRange { rank: 3, max: 2 })));
        assert!(matches!(leading_atoms(&a, 0), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn single_precision_factorisation() {
        let a = random(d(4, 3, 4), 8);
        let a32 = Tensor3::from_vec(a.dims(), a.data().iter().map(|&x| x as f32).collect()).unwrap();
        let f = tsvd(&a32).unwrap();
        let r = f.reconstruct().unwrap();
        let err = r.sub(&a32).unwrap().frobenius_norm() / a32.frobenius_norm();
        assert!(err < 1e-5, "{err}");
    }
}
