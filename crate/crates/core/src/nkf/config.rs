use crate::error::{AecError, Result};

/// Initialization of the per-bin runtime state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Zeros,
    /// Complex white Gaussian noise on `h_hat`, the hidden states, and `delta_h`.
    Noise,
}

/// Per-bin signal level tracking used to normalize the network features.
///
/// With level `σ`, the network sees `[x/σ; Δĥ; e/σ]` and its output is
/// divided by `σ` before use, so the canceller behaves the same at every
/// signal level. `σ² = p + floor`, where `p` is an exponential average of
/// `‖x‖²/L + |Y|²`, seeded with the first nonzero value. Including the
/// microphone power keeps `e/σ` bounded when the far end pauses during
/// near-end speech.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelNorm {
    pub forgetting: f64,
    pub floor: f64,
}

impl Default for LevelNorm {
    fn default() -> Self {
        LevelNorm {
            forgetting: 0.9,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NkfConfig {
    /// CTF taps `L`.
    pub taps: usize,
    pub init_mode: InitMode,
    /// Standard deviation of each real/imaginary part under [`InitMode::Noise`].
    pub noise_scale: f64,
    pub init_seed: u64,
    /// `None` feeds the raw features and uses the raw network output as gain.
    pub level_norm: Option<LevelNorm>,
}

impl Default for NkfConfig {
    fn default() -> Self {
        NkfConfig {
            taps: 4,
            init_mode: InitMode::Zeros,
            noise_scale: 0.1,
            init_seed: 0,
            level_norm: Some(LevelNorm::default()),
        }
    }
}

impl NkfConfig {
    pub fn with_taps(taps: usize) -> Self {
        NkfConfig {
            taps,
            ..NkfConfig::default()
        }
    }

    /// Feature length `2L + 1`: far-end frames, last update, prior error.
    pub fn feature_dim(&self) -> usize {
        2 * self.taps + 1
    }

    /// Widths of the three dense layers: `[2D, 2D, L]`.
    pub fn fc_units(&self) -> [usize; 3] {
        let d = self.feature_dim();
        [2 * d, 2 * d, self.taps]
    }

    /// Hidden width of both recurrent layers: `L^2 + 2`.
    pub fn gru_units(&self) -> usize {
        self.taps * self.taps + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(AecError::config("taps must be >= 1"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(AecError::config("noise_scale must be finite and >= 0"));
        }
        if let Some(n) = self.level_norm {
            if !(0.0..1.0).contains(&n.forgetting) {
                return Err(AecError::config("level forgetting factor must lie in [0, 1)"));
            }
            if !(n.floor > 0.0 && n.floor.is_finite()) {
                return Err(AecError::config("level floor must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_sizes_for_four_taps() {
        let c = NkfConfig::default();
        assert_eq!(c.feature_dim(), 9);
        assert_eq!(c.fc_units(), [18, 18, 4]);
        assert_eq!(c.gru_units(), 18);
        let c = NkfConfig::with_taps(2);
        assert_eq!((c.feature_dim(), c.fc_units(), c.gru_units()), (5, [10, 10, 2], 6));
    }
}
