//! Monte Carlo checks of the ensemble scaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tpursuit_core::operators::{Ensemble, MapKind, MeasurementMap};
use tpursuit_core::{Dims, Tensor};

fn dense(phi: &MeasurementMap<f64>) -> &nalgebra::DMatrix<f64> {
    match phi.kind() {
        MapKind::Dense(d) => d.matrix(),
        MapKind::Sampling(_) => unreachable!(),
    }
}

#[test]
fn column_second_moment_is_one() {
    let d = Dims::new(3, 3, 2).unwrap();
    for ensemble in [Ensemble::Gaussian, Ensemble::Rademacher] {
        let (m, trials) = (50, 250);
        let mut acc = 0.0;
        for t in 0..trials {
            let phi = MeasurementMap::<f64>::from_ensemble(ensemble, m, d, t).unwrap();
            let a = dense(&phi);
            // sum over rows of φ_ij² estimates E|column|² = 1
            acc += a.column(0).norm_squared();
        }
        let mean = acc / trials as f64;
        assert!((mean - 1.0).abs() < 0.05, "{}: {mean}", ensemble.name());
    }
}

#[test]
fn isometry_holds_in_expectation() {
    let d = Dims::new(4, 3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = Tensor::from_fn(d, |_, _, _| rng.sample(StandardNormal));
    let target = x.norm_sqr();
    for ensemble in [Ensemble::Gaussian, Ensemble::Rademacher] {
        let draws = 2000;
        let mean: f64 = (0..draws)
            .map(|s| {
                let phi = MeasurementMap::<f64>::from_ensemble(ensemble, 12, d, 1000 + s).unwrap();
                phi.apply(&x).unwrap().norm_squared()
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean / target - 1.0).abs() < 0.05, "{}: {mean} vs {target}", ensemble.name());
    }
}

#[test]
fn seeded_draws_are_bit_identical() {
    let d = Dims::new(3, 2, 2).unwrap();
    let a = MeasurementMap::<f64>::gaussian(9, d, 5).unwrap();
    let b = MeasurementMap::<f64>::gaussian(9, d, 5).unwrap();
    let bits = |m: &MeasurementMap<f64>| dense(m).iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let c = MeasurementMap::<f64>::gaussian(9, d, 6).unwrap();
    assert_ne!(bits(&a), bits(&c));
}
