//! Set-membership estimation toolkit.
//!
//! Converts noisy linear-regression data `Y = θX + W` with instantaneous
//! disturbance bounds into ellipsoidal quadratic-matrix-inequality (QMI)
//! descriptions of every parameter matrix consistent with the data, and uses
//! those descriptions to synthesize a robust H∞ estimator for an unknown
//! discrete-time LTI system together with a certified error bound.
//!
//! The crate is generic over the working scalar (`f32` or `f64`, see
//! [`scalar::Scalar`]); concrete `f64` aliases for the main domain types live
//! at the crate root. All numerical guarantees quoted in the documentation
//! refer to `f64`.

extern crate openblas_src as _;

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod fileio;
pub mod matops;
pub mod prior;
pub mod qmi;
pub mod reparam;
pub mod scalar;
pub mod sdp;
pub mod synth;

pub use error::{Error, Result};

/// `f64` QMI set description.
pub type Qmi64 = qmi::Qmi<f64>;
/// `f32` QMI set description.
pub type Qmi32 = qmi::Qmi<f32>;
/// `f64` regression sample.
pub type RegressionSample64 = reparam::RegressionSample<f64>;
/// `f64` discrete-time state-space system.
pub type StateSpace64 = analysis::StateSpace<f64>;
/// `f64` LTI estimator.
pub type Estimator64 = analysis::Estimator<f64>;
/// `f64` uncertain plant description.
pub type UncertainPlant64 = synth::UncertainPlant<f64>;
/// `f64` synthesis outcome.
pub type SynthesisResult64 = synth::SynthesisResult<f64>;
