//! Model-based echo cancellers: the time-frequency-domain Kalman filter and
//! a time-domain proportionate NLMS filter.

mod pnlms;
mod tfdkf;

pub use pnlms::{pnlms_run, PnlmsConfig, PnlmsFilter};
pub use tfdkf::{tfdkf_run, ObservationNoise, TfdkfConfig, TfdkfState, TfdkfStep};
