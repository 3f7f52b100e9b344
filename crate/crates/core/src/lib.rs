//! Acoustic echo cancellation in the short-time Fourier domain: a per-bin
//! Kalman filter, a proportionate NLMS baseline, and a neural Kalman filter
//! whose gain is produced by a small complex recurrent network.
//!
//! Numeric code is generic over [`scalar::Real`]; the aliases below name the
//! two instantiations the rest of the workspace uses.

pub mod error;
pub mod scalar;
pub mod signal;
pub mod sim;
pub mod filters;
pub mod nkf;
pub mod train;

pub use error::{AecError, Result};

/// Precision used for inference and for stored weights.
pub type Weights32 = nkf::ModelWeights<f32>;
/// Precision used for training, gradients, and reference checks.
pub type Weights64 = nkf::ModelWeights<f64>;
pub type Spectrogram32 = signal::Spectrogram<f32>;
pub type Spectrogram64 = signal::Spectrogram<f64>;
pub type Signal64 = signal::TimeSignal<f64>;
pub type NkfState32 = nkf::NkfState<f32>;
pub type TfdkfState64 = filters::TfdkfState<f64>;
