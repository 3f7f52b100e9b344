//! The neural Kalman filter: a small complex-valued recurrent network that
//! predicts the Kalman gain of a per-bin CTF echo-path tracker.

pub(crate) mod batch;
mod config;
pub mod io;
pub(crate) mod kernels;
mod layers;
mod model;
mod weights;

pub use config::{InitMode, LevelNorm, NkfConfig};
pub use io::{load_weights, save_weights, verify_weights};
pub use layers::{complex_gru_cell, complex_linear, complex_prelu, split_sigmoid, split_tanh};
pub use model::{init_state, nkf_forward_frame, nkf_gain, nkf_run, NkfState};
pub(crate) use model::{gather_frame, init_batch};
pub use weights::{DenseWeights, GruWeights, ModelWeights, TensorInfo, TensorMut, TensorRef};
