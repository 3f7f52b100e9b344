use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AecError, Result};
use crate::signal::{wav, TimeSignal, SAMPLE_RATE};

/// Speech-like test material: white noise through two time-varying AR(2)
/// resonators (formants), gated by a syllabic envelope with pauses.
///
/// Each syllable lasts 80-300 ms, has its own formant pair and level, and is
/// silent with probability 0.2. The output is scaled to an RMS of 0.05 times
/// a per-clip gain uniform in [-6, +6] dB.
pub fn speech_like(len: usize, seed: u64) -> TimeSignal<f64> {
    let fs = SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    // resonator state: (y[n-1], y[n-2]) per section
    let mut state = [(0.0f64, 0.0f64); 2];
    while out.len() < len {
        let seg_len = ((rng.gen_range(0.08..0.3)) * fs) as usize;
        let silent = rng.gen_bool(0.2);
        let level = 10f64.powf(rng.gen_range(-12.0..0.0) / 20.0);
        let formants = [rng.gen_range(250.0..900.0), rng.gen_range(900.0..2800.0)];
        let radii = [rng.gen_range(0.95..0.99), rng.gen_range(0.93..0.98)];
        let coeffs: Vec<(f64, f64, f64)> = formants
            .iter()
            .zip(&radii)
            .map(|(&f, &r)| {
                let theta = std::f64::consts::TAU * f / fs;
                (2.0 * r * theta.cos(), -r * r, 1.0 - r)
            })
            .collect();
        for i in 0..seg_len {
            let phase = i as f64 / seg_len as f64;
            let env = if silent {
                0.0
            } else {
                level * (std::f64::consts::PI * phase).sin().powf(0.6)
            };
            let mut v: f64 = StandardNormal.sample(&mut rng);
            for (s, &(a1, a2, g)) in state.iter_mut().zip(&coeffs) {
                let y = g * v + a1 * s.0 + a2 * s.1;
                *s = (y, s.0);
                v = y;
            }
            out.push(v * env);
            if out.len() == len {
                break;
            }
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        let gain = 0.05 * 10f64.powf(rng.gen_range(-6.0..6.0) / 20.0) / rms;
        out.iter_mut().for_each(|v| *v *= gain);
    }
    TimeSignal::new(out, SAMPLE_RATE)
}

/// Source material for scenes: a directory of 16 kHz mono WAVs, or the
/// built-in speech-like generator.
#[derive(Debug, Clone)]
pub enum Corpus {
    Generated,
    Directory(Vec<PathBuf>),
}

impl Corpus {
    /// Uses the WAVs under `dir`, or the generator when `dir` is `None`.
    pub fn open(dir: Option<&Path>) -> Result<Corpus> {
        let Some(dir) = dir else {
            return Ok(Corpus::Generated);
        };
        let entries = std::fs::read_dir(dir).map_err(|e| AecError::io(dir, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| AecError::io(dir, e))?.path();
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                files.push(path);
            }
        }
        if files.is_empty() {
            return Err(AecError::Config(format!("no .wav files in {}", dir.display())));
        }
        files.sort();
        Ok(Corpus::Directory(files))
    }

    /// Draws at least `min_len` samples of source material identified by `id`.
    /// Directory corpora concatenate consecutive files when one is too short.
    pub fn draw(&self, id: u64, min_len: usize) -> Result<TimeSignal<f64>> {
        match self {
            Corpus::Generated => Ok(speech_like(min_len.max(1), id)),
            Corpus::Directory(files) => {
                let start = (id % files.len() as u64) as usize;
                let mut samples = Vec::new();
                for i in 0..files.len() {
                    let sig = wav::read_wav(&files[(start + i) % files.len()])?;
                    samples.extend(sig.samples);
                    if samples.len() >= min_len {
                        break;
                    }
                }
                if samples.len() < min_len {
                    return Err(AecError::Config(format!(
                        "corpus holds {} samples in total, need {min_len}",
                        samples.len()
                    )));
                }
                Ok(TimeSignal::new(samples, SAMPLE_RATE))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_and_finite() {
        let a = speech_like(16_000, 3);
        assert_eq!(a, speech_like(16_000, 3));
        assert_ne!(a, speech_like(16_000, 4));
        assert!(a.samples.iter().all(|v| v.is_finite()));
        let rms = (a.energy() / 16_000.0).sqrt();
        assert!(rms > 0.02 && rms < 0.11, "{rms}");
    }

    #[test]
    fn generator_has_pauses_and_low_frequency_emphasis() {
        let a = speech_like(64_000, 8);
        let zeros = a.samples.iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > 0);
        // first difference removes low frequencies; most energy sits below it
        let diff: f64 = a.samples.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        assert!(diff < a.energy());
    }

    #[test]
    fn directory_corpus_reads_and_concatenates() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..2 {
            let sig = speech_like(1000, i);
            wav::write_wav(dir.path().join(format!("{i}.wav")), &sig, wav::WavFormat::Float32)
                .unwrap();
        }
        let corpus = Corpus::open(Some(dir.path())).unwrap();
        assert_eq!(corpus.draw(0, 500).unwrap().len(), 1000);
        assert_eq!(corpus.draw(1, 1500).unwrap().len(), 2000);
        assert!(corpus.draw(0, 2500).is_err());
        let empty = tempfile::tempdir().unwrap();
        assert!(Corpus::open(Some(empty.path())).is_err());
    }
}
