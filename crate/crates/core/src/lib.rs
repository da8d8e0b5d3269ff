//! Greedy low-tubal-rank tensor completion and tensor sensing built on the
//! t-SVD, plus an empirical estimator for restricted isometry constants of
//! random measurement maps.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the common `f64` instantiation.

pub mod error;
pub mod fourier;
pub mod io;
pub mod operators;
pub mod pursuit;
pub mod scalar;
pub mod tensor;
pub mod trip;
pub mod tsvd;

pub use error::{Error, Result};
pub use fourier::{fft3, ifft3, FourierTensor};
pub use operators::{Ensemble, MeasurementMap, SamplingMask};
pub use pursuit::{PursuitConfig, PursuitResult, Variant};
pub use scalar::{Complex, Scalar};
pub use tensor::{Dims, Tensor3};
pub use trip::{StudyTable, TripStudyConfig};
pub use tsvd::{RankOneAtom, TsvdFactors};

pub type Tensor = Tensor3<f64>;
pub type Tensor32 = Tensor3<f32>;
pub type Map = MeasurementMap<f64>;
pub type Map32 = MeasurementMap<f32>;
pub type Pursuit = PursuitResult<f64>;
