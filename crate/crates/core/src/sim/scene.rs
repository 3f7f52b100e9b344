use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use num_complex::Complex;

use super::{derive_seed, generate_rir, Rir, RirKind};
use crate::error::{AecError, Result};
use crate::scalar::Real;
use crate::signal::{apply_ctf, ctf_stack, Spectrogram, TimeSignal, SAMPLE_RATE};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EchoPathChange {
    /// Seconds from the start of the clip at which the second RIR takes over.
    pub switch_time: f64,
}

/// Everything needed to rebuild a scene from its sources.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneConfig {
    pub ser_db: f64,
    pub far_len: f64,
    /// Zero for far-end single talk.
    pub near_len: f64,
    pub near_offset: f64,
    pub epc: Option<EchoPathChange>,
    pub rir_seed: u64,
    pub mix_seed: u64,
    pub rir_kind: RirKind,
    pub rir_len: usize,
}

impl SceneConfig {
    pub fn is_single_talk(&self) -> bool {
        self.near_len <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub far: TimeSignal<f64>,
    pub near: TimeSignal<f64>,
    pub echo: TimeSignal<f64>,
    pub mic: TimeSignal<f64>,
    pub rirs: Vec<Rir>,
    pub config: SceneConfig,
}

impl Scene {
    pub fn switch_sample(&self) -> Option<usize> {
        self.config.epc.map(|e| secs_to_samples(e.switch_time))
    }
}

pub(crate) fn secs_to_samples(secs: f64) -> usize {
    (secs * SAMPLE_RATE as f64).round() as usize
}

/// Linear echo `d[n] = sum_tau h[tau] x[n - tau]`, same length as `far`.
pub fn convolve_echo(far: &TimeSignal<f64>, rir: &Rir) -> TimeSignal<f64> {
    let x = &far.samples;
    let h = &rir.taps;
    let out = (0..x.len())
        .map(|n| {
            let mut acc = 0.0;
            for (tau, &ht) in h.iter().enumerate().take(n + 1) {
                acc += ht * x[n - tau];
            }
            acc
        })
        .collect();
    TimeSignal::new(out, far.sample_rate)
}

/// Echo produced by `rir_a` before `switch_sample` and `rir_b` from then on;
/// both act on the same far-end history.
pub fn apply_echo_path_change(
    far: &TimeSignal<f64>,
    rir_a: &Rir,
    rir_b: &Rir,
    switch_sample: usize,
) -> Result<TimeSignal<f64>> {
    if rir_a.len() != rir_b.len() {
        return Err(AecError::config(format!(
            "rir lengths differ: {} vs {}",
            rir_a.len(),
            rir_b.len()
        )));
    }
    if switch_sample > far.len() {
        return Err(AecError::config(format!(
            "switch sample {switch_sample} beyond signal length {}",
            far.len()
        )));
    }
    let before = TimeSignal::new(far.samples[..switch_sample].to_vec(), far.sample_rate);
    let mut out = convolve_echo(&before, rir_a).samples;
    let x = &far.samples;
    for n in switch_sample..x.len() {
        let mut acc = 0.0;
        for (tau, &ht) in rir_b.taps.iter().enumerate().take(n + 1) {
            acc += ht * x[n - tau];
        }
        out.push(acc);
    }
    Ok(TimeSignal::new(out, far.sample_rate))
}

/// Index span between the first and last non-zero sample.
pub(crate) fn active_span(samples: &[f64]) -> Option<std::ops::Range<usize>> {
    let first = samples.iter().position(|&v| v != 0.0)?;
    let last = samples.iter().rposition(|&v| v != 0.0)?;
    Some(first..last + 1)
}

/// Scales `echo` so that the near-to-echo power ratio over the near-end's
/// active span equals `ser_db`, and returns `(near + scaled_echo, scaled_echo)`.
pub fn mix_at_ser(
    near: &TimeSignal<f64>,
    echo: &TimeSignal<f64>,
    ser_db: f64,
) -> Result<(TimeSignal<f64>, TimeSignal<f64>)> {
    if near.len() != echo.len() {
        return Err(AecError::shape(format!(
            "near has {} samples, echo has {}",
            near.len(),
            echo.len()
        )));
    }
    let scale = if ser_db == f64::INFINITY {
        0.0
    } else {
        let span = active_span(&near.samples)
            .ok_or_else(|| AecError::DegenerateInput("near-end has zero energy".into()))?;
        let p_near: f64 = near.samples[span.clone()].iter().map(|v| v * v).sum();
        let p_echo: f64 = echo.samples[span].iter().map(|v| v * v).sum();
        if p_echo == 0.0 {
            return Err(AecError::DegenerateInput(
                "echo has zero energy under the near-end segment".into(),
            ));
        }
        (p_near / (p_echo * 10f64.powf(ser_db / 10.0))).sqrt()
    };
    let mic: Vec<f64> = near
        .samples
        .iter()
        .zip(&echo.samples)
        .map(|(s, d)| s + d * scale)
        .collect();
    // Realize the echo as mic - near so that both mic == near + echo and
    // mic - near == echo hold exactly in floating point.
    let scaled = mic.iter().zip(&near.samples).map(|(m, s)| m - s).collect();
    Ok((
        TimeSignal::new(mic, near.sample_rate),
        TimeSignal::new(scaled, echo.sample_rate),
    ))
}

fn clip(src: &TimeSignal<f64>, len: usize, rng: &mut ChaCha8Rng, what: &str) -> Result<Vec<f64>> {
    if src.len() < len {
        return Err(AecError::config(format!(
            "{what} source has {} samples, need {len}",
            src.len()
        )));
    }
    let start = rng.gen_range(0..=src.len() - len);
    Ok(src.samples[start..start + len].to_vec())
}

/// Assembles a scene from far/near source material. The far-end and near-end
/// excerpts are taken at offsets drawn from `mix_seed`; RIRs come from
/// `rir_seed`.
pub fn build_scene(
    far_src: &TimeSignal<f64>,
    near_src: &TimeSignal<f64>,
    config: &SceneConfig,
) -> Result<Scene> {
    let far_n = secs_to_samples(config.far_len);
    if far_n == 0 {
        return Err(AecError::config("far_len must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.mix_seed);
    let far = TimeSignal::new(clip(far_src, far_n, &mut rng, "far-end")?, SAMPLE_RATE);

    let rir_a = generate_rir(config.rir_len, config.rir_kind, config.rir_seed)?;
    let (echo, rirs) = match config.epc {
        None => (convolve_echo(&far, &rir_a), vec![rir_a]),
        Some(epc) => {
            let switch = secs_to_samples(epc.switch_time);
            if epc.switch_time < 0.0 || switch > far_n {
                return Err(AecError::config(format!(
                    "switch_time {} outside the {}-second clip",
                    epc.switch_time, config.far_len
                )));
            }
            let rir_b =
                generate_rir(config.rir_len, config.rir_kind, derive_seed(config.rir_seed, 1))?;
            let echo = apply_echo_path_change(&far, &rir_a, &rir_b, switch)?;
            (echo, vec![rir_a, rir_b])
        }
    };

    let near_n = secs_to_samples(config.near_len);
    if near_n == 0 {
        return Ok(Scene {
            near: TimeSignal::zeros(far_n, SAMPLE_RATE),
            mic: echo.clone(),
            far,
            echo,
            rirs,
            config: config.clone(),
        });
    }
    let offset = secs_to_samples(config.near_offset);
    if offset + near_n > far_n {
        return Err(AecError::config(format!(
            "near segment ({} s at {} s) does not fit in the {} s clip",
            config.near_len, config.near_offset, config.far_len
        )));
    }
    let mut near = vec![0.0; far_n];
    near[offset..offset + near_n].copy_from_slice(&clip(near_src, near_n, &mut rng, "near-end")?);
    let near = TimeSignal::new(near, SAMPLE_RATE);
    let (mic, echo) = mix_at_ser(&near, &echo, config.ser_db)?;
    Ok(Scene {
        far,
        near,
        echo,
        mic,
        rirs,
        config: config.clone(),
    })
}

/// Echo generated directly in the STFT domain: bin `k` of frame `m` is
/// `paths[k]^H` applied to the stacked far-end frames. Every bin needs a path
/// and all paths share one length.
pub fn ctf_echo<T: Real>(far: &Spectrogram<T>, paths: &[Vec<Complex<T>>]) -> Result<Spectrogram<T>> {
    if paths.len() != far.num_bins() {
        return Err(AecError::shape(format!(
            "{} paths for {} bins",
            paths.len(),
            far.num_bins()
        )));
    }
    let taps = paths.first().map_or(0, Vec::len);
    if paths.iter().any(|p| p.len() != taps) {
        return Err(AecError::shape("paths differ in length"));
    }
    let mut out = Spectrogram::zeros(*far.config(), far.num_frames());
    for m in 0..far.num_frames() {
        for (k, path) in paths.iter().enumerate() {
            let x = ctf_stack(far, m, k, taps)?;
            out.set(m, k, apply_ctf(path, &x)?);
        }
    }
    Ok(out)
}
