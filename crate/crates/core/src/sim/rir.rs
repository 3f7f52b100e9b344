use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AecError, Result};
use crate::signal::SAMPLE_RATE;

/// Room impulse response, normalized to unit energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RirKind {
    /// Flat white Gaussian noise (training mode).
    WhiteNoise,
    /// White Gaussian noise under an exponential envelope reaching -60 dB
    /// after `t60` seconds (evaluation mode).
    Decaying { t60: f64 },
}

impl Default for RirKind {
    fn default() -> Self {
        RirKind::Decaying { t60: 0.1 }
    }
}

pub fn generate_rir(length: usize, kind: RirKind, seed: u64) -> Result<Rir> {
    if length == 0 {
        return Err(AecError::config("rir length must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay_per_sample = match kind {
        RirKind::WhiteNoise => 0.0,
        RirKind::Decaying { t60 } => {
            if !(t60 > 0.0) {
                return Err(AecError::config(format!("t60 must be positive, got {t60}")));
            }
            3.0 * std::f64::consts::LN_10 / (t60 * SAMPLE_RATE as f64)
        }
    };
    let mut taps: Vec<f64> = (0..length)
        .map(|n| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * (-decay_per_sample * n as f64).exp()
        })
        .collect();
    let energy: f64 = taps.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        taps[0] = 1.0;
    } else {
        let norm = energy.sqrt().recip();
        taps.iter_mut().for_each(|v| *v *= norm);
    }
    Ok(Rir {
        taps,
        sample_rate: SAMPLE_RATE,
    })
}
