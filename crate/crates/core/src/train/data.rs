use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::OptimizerKind;
use crate::error::{AecError, Result};
use crate::signal::{stft, Spectrogram, StftConfig};
use crate::sim::{derive_seed, Corpus, Scene, ScenePlan};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Initial learning rate.
    pub lr: f64,
    pub epochs: usize,
    /// Clips per optimizer step.
    pub batch_size: usize,
    /// Training clips; each is regenerated from its own seed every epoch.
    pub num_clips: usize,
    pub ser_range: (f64, f64),
    /// Probability that a clip starts from a noise-initialized state.
    pub init_noise_prob: f64,
    /// Frequency bins drawn per clip; `None` trains on every bin.
    pub bins_per_clip: Option<usize>,
    /// Draw a fresh bin subset and initial state for every clip in every
    /// epoch. When off, each clip keeps one draw for the whole run, so the
    /// epoch-mean loss is measured on the same points every epoch.
    pub redraw_each_epoch: bool,
    pub optimizer: OptimizerKind,
    pub clip_norm: f64,
    pub rir_len: usize,
    /// Scale of the initial output-layer weights relative to Glorot.
    pub output_init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            epochs: 5,
            batch_size: 16,
            num_clips: 200,
            ser_range: (-5.0, 5.0),
            init_noise_prob: 0.5,
            bins_per_clip: None,
            redraw_each_epoch: false,
            optimizer: OptimizerKind::Sgd,
            clip_norm: 5.0,
            rir_len: 1024,
            output_init_scale: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings that train a useful model on one core in a few minutes:
    /// Adam, two clips per step, 64 bins per clip.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 2,
            bins_per_clip: Some(64),
            optimizer: OptimizerKind::Adam,
            seed: 1,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AecError::config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and >= 0");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.num_clips == 0 {
            return bad("epochs, batch_size and num_clips must be >= 1");
        }
        if !(self.ser_range.0 <= self.ser_range.1) {
            return bad("ser_range must be ordered");
        }
        if !(0.0..=1.0).contains(&self.init_noise_prob) {
            return bad("init_noise_prob must lie in [0, 1]");
        }
        if self.bins_per_clip == Some(0) {
            return bad("bins_per_clip must be >= 1");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be > 0");
        }
        if !(self.output_init_scale >= 0.0 && self.output_init_scale.is_finite()) {
            return bad("output_init_scale must be finite and >= 0");
        }
        if self.rir_len == 0 {
            return bad("rir_len must be >= 1");
        }
        Ok(())
    }

    /// Starting weights for a fresh run.
    pub fn initial_weights(&self, nkf: &crate::nkf::NkfConfig) -> crate::nkf::ModelWeights<f64> {
        crate::nkf::ModelWeights::init_scaled(nkf, derive_seed(self.seed, u64::MAX), self.output_init_scale)
    }

    /// Seed of training clip `index`.
    pub fn clip_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }
}

/// A training scene with its spectrograms. `echo` is the target `D`.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub scene: Scene,
    pub far: Spectrogram<f64>,
    pub mic: Spectrogram<f64>,
    pub echo: Spectrogram<f64>,
}

/// Builds the training scene for `seed`: 1 s of far-end speech, 0.5 to 1 s
/// of near-end speech at a random offset, SER uniform over `ser_range`, and
/// a white-noise RIR.
pub fn sample_example(corpus: &Corpus, config: &TrainConfig, seed: u64) -> Result<TrainingExample> {
    let scene = ScenePlan::training(seed, config.ser_range, config.rir_len).build(corpus)?;
    let stft_cfg = StftConfig::default();
    Ok(TrainingExample {
        far: stft(&scene.far, &stft_cfg)?,
        mic: stft(&scene.mic, &stft_cfg)?,
        echo: stft(&scene.echo, &stft_cfg)?,
        scene,
    })
}

/// Per-clip randomness: bin subset, initial-state mode, noise seed. Keyed on
/// the epoch too when `redraw_each_epoch` is set.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ClipDraw {
    pub bins: Vec<usize>,
    pub noise_init: bool,
    pub init_seed: u64,
}

pub(crate) fn draw_clip(config: &TrainConfig, epoch: usize, clip: usize, num_bins: usize) -> ClipDraw {
    let key = if config.redraw_each_epoch { epoch as u64 } else { 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(config.seed ^ 0x5eed, key), clip as u64));
    let noise_init = rng.gen_bool(config.init_noise_prob);
    let init_seed = rng.gen();
    let bins = match config.bins_per_clip {
        Some(n) if n < num_bins => {
            let mut b = sample(&mut rng, num_bins, n).into_vec();
            b.sort_unstable();
            b
        }
        _ => (0..num_bins).collect(),
    };
    ClipDraw {
        bins,
        noise_init,
        init_seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples_are_seeded() {
        let cfg = TrainConfig::default();
        let a = sample_example(&Corpus::Generated, &cfg, 4).unwrap();
        let b = sample_example(&Corpus::Generated, &cfg, 4).unwrap();
        assert_eq!(a.scene.mic, b.scene.mic);
        assert_eq!(a.echo, b.echo);
        assert_eq!(a.far.num_frames(), 66);
        let c = sample_example(&Corpus::Generated, &cfg, 5).unwrap();
        assert_ne!(a.scene.mic, c.scene.mic);
    }

    #[test]
    fn near_end_bounds_hold() {
        let cfg = TrainConfig::default();
        for seed in 0..300 {
            let plan = ScenePlan::training(seed, cfg.ser_range, cfg.rir_len);
            let c = &plan.config;
            assert!((0.5..=1.0).contains(&c.near_len), "{}", c.near_len);
            assert!(c.near_offset >= 0.0 && c.near_offset + c.near_len <= 1.0 + 1e-9);
            assert_eq!(c.far_len, 1.0);
        }
    }

    #[test]
    fn ser_is_uniform_on_range() {
        // one-sample Kolmogorov-Smirnov test against U(-5, 5)
        let cfg = TrainConfig::default();
        let mut sers: Vec<f64> = (0..1000)
            .map(|s| ScenePlan::training(s, cfg.ser_range, cfg.rir_len).config.ser_db)
            .collect();
        sers.sort_by(f64::total_cmp);
        let n = sers.len() as f64;
        let d = sers
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = (v + 5.0) / 10.0;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic critical value for p = 0.01 is 1.628 / sqrt(n)
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
        assert!(sers.iter().all(|v| (-5.0..=5.0).contains(v)));
    }

    #[test]
    fn clip_draws_are_reproducible() {
        let cfg = TrainConfig {
            bins_per_clip: Some(16),
            ..TrainConfig::default()
        };
        let a = draw_clip(&cfg, 1, 3, 513);
        assert_eq!(a, draw_clip(&cfg, 1, 3, 513));
        assert_eq!(a, draw_clip(&cfg, 2, 3, 513));
        assert_ne!(a, draw_clip(&cfg, 1, 4, 513));
        let redraw = TrainConfig {
            redraw_each_epoch: true,
            ..cfg.clone()
        };
        assert_ne!(draw_clip(&redraw, 1, 3, 513), draw_clip(&redraw, 2, 3, 513));
        assert_eq!(a.bins.len(), 16);
        assert!(a.bins.windows(2).all(|w| w[0] < w[1]) && a.bins[15] < 513);
        let noise = (0..1000).filter(|&c| draw_clip(&cfg, 0, c, 513).noise_init).count();
        assert!((400..600).contains(&noise), "{noise}");
    }
}
