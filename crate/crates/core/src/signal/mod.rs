//! Time signals, STFT analysis/synthesis, CTF input vectors, and WAV I/O.

pub(crate) mod ctf;
mod stft;
pub mod wav;

pub use ctf::{apply_ctf, ctf_stack, CtfInputVector};
pub use stft::{istft, stft, Spectrogram, StftConfig, WindowKind};

use crate::scalar::Real;

/// Sample rate every paper-mode operation runs at.
pub const SAMPLE_RATE: u32 = 16_000;

/// A mono real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> TimeSignal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        TimeSignal {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&v| v * v).sum()
    }

    pub fn cast<U: Real>(&self) -> TimeSignal<U> {
        TimeSignal {
            samples: self
                .samples
                .iter()
                .map(|v| U::of(v.to_f64_lossless()))
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}
