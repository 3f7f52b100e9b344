use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::TimeSignal;
use crate::error::{AecError, Result};
use crate::scalar::{czero, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    /// Hann analysis window with rectangular synthesis (plain overlap-add).
    Hann,
    /// Square-root Hann on both analysis and synthesis (weighted overlap-add).
    SqrtHann,
}

/// STFT framing parameters.
///
/// Framing convention: the signal is preceded by `window_length - hop_size`
/// zeros, so frame `m` ends at sample `(m + 1) * hop_size - 1` of the
/// original signal and the transform is causal at hop granularity. The tail
/// is zero-padded up to a whole frame. A signal of `n` samples therefore
/// yields `ceil((n + window_length - hop_size) / hop_size)` frames, and every
/// original sample is covered by the full set of overlapping frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_length: usize,
    pub hop_size: usize,
    pub window_kind: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            fft_size: 1024,
            window_length: 1024,
            hop_size: 256,
            window_kind: WindowKind::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop_size: usize, window_kind: WindowKind) -> Self {
        StftConfig {
            fft_size,
            window_length: fft_size,
            hop_size,
            window_kind,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Zeros inserted ahead of the first sample.
    pub fn front_padding(&self) -> usize {
        self.window_length - self.hop_size
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        (num_samples + self.front_padding()).div_ceil(self.hop_size)
    }

    pub fn analysis_window<T: Real>(&self) -> Vec<T> {
        let hann = periodic_hann::<T>(self.window_length);
        match self.window_kind {
            WindowKind::Hann => hann,
            WindowKind::SqrtHann => hann.into_iter().map(|w| w.sqrt()).collect(),
        }
    }

    pub fn synthesis_window<T: Real>(&self) -> Vec<T> {
        match self.window_kind {
            WindowKind::Hann => vec![T::one(); self.window_length],
            WindowKind::SqrtHann => self.analysis_window(),
        }
    }

    /// Per-residue sums of `w_a[n - mH] * w_s[n - mH]` over all frames.
    pub fn overlap_sums<T: Real>(&self) -> Vec<T> {
        let wa = self.analysis_window::<T>();
        let ws = self.synthesis_window::<T>();
        let mut sums = vec![T::zero(); self.hop_size];
        for (n, (a, s)) in wa.iter().zip(&ws).enumerate() {
            sums[n % self.hop_size] += *a * *s;
        }
        sums
    }

    /// Checks the framing invariants, including constant overlap-add.
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_multiple_of(2) {
            return Err(AecError::config(format!(
                "fft_size must be even and >= 2, got {}",
                self.fft_size
            )));
        }
        if self.window_length != self.fft_size {
            return Err(AecError::config("window_length must equal fft_size"));
        }
        if self.hop_size == 0 || !self.window_length.is_multiple_of(self.hop_size) {
            return Err(AecError::config(format!(
                "hop_size {} must divide window_length {}",
                self.hop_size, self.window_length
            )));
        }
        let sums = self.overlap_sums::<f64>();
        let (lo, hi) = sums
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if lo <= 0.0 || hi - lo > 1e-10 * hi {
            return Err(AecError::config(format!(
                "window {:?} with hop {} violates constant overlap-add (range {lo}..{hi})",
                self.window_kind, self.hop_size
            )));
        }
        Ok(())
    }

    fn cola_gain<T: Real>(&self) -> T {
        let sums = self.overlap_sums::<T>();
        sums.iter().copied().sum::<T>() / T::of(sums.len() as f64)
    }
}

fn periodic_hann<T: Real>(len: usize) -> Vec<T> {
    let n = T::of(len as f64);
    (0..len)
        .map(|i| {
            let phase = T::TAU() * T::of(i as f64) / n;
            T::of(0.5) - T::of(0.5) * phase.cos()
        })
        .collect()
}

/// One-sided complex spectrogram stored frame-major: `data[m * num_bins + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    data: Vec<Complex<T>>,
    num_frames: usize,
    config: StftConfig,
    num_samples: usize,
}

impl<T: Real> Spectrogram<T> {
    pub fn zeros(config: StftConfig, num_frames: usize) -> Self {
        Spectrogram {
            data: vec![czero(); num_frames * config.num_bins()],
            num_frames,
            config,
            num_samples: num_frames * config.hop_size,
        }
    }

    /// Wraps raw frame-major data. `num_samples` is the time-domain length
    /// `istft` will reconstruct.
    pub fn from_data(
        config: StftConfig,
        num_frames: usize,
        data: Vec<Complex<T>>,
        num_samples: usize,
    ) -> Result<Self> {
        if data.len() != num_frames * config.num_bins() {
            return Err(AecError::shape(format!(
                "spectrogram data has {} entries, expected {} x {}",
                data.len(),
                num_frames,
                config.num_bins()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(AecError::Numerical("non-finite spectrogram entry".into()));
        }
        Ok(Spectrogram {
            data,
            num_frames,
            config,
            num_samples,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins()
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, frame: usize, bin: usize) -> Complex<T> {
        self.data[frame * self.num_bins() + bin]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, bin: usize, value: Complex<T>) {
        let f = self.num_bins();
        self.data[frame * f + bin] = value;
    }

    pub fn frame(&self, frame: usize) -> &[Complex<T>] {
        let f = self.num_bins();
        &self.data[frame * f..(frame + 1) * f]
    }

    /// All frames of one frequency bin.
    pub fn bin(&self, bin: usize) -> Vec<Complex<T>> {
        (0..self.num_frames).map(|m| self.get(m, bin)).collect()
    }

    pub fn set_bin(&mut self, bin: usize, values: &[Complex<T>]) {
        debug_assert_eq!(values.len(), self.num_frames);
        for (m, v) in values.iter().enumerate() {
            self.set(m, bin, *v);
        }
    }

    pub fn same_shape(&self, other: &Spectrogram<T>) -> bool {
        self.num_frames == other.num_frames && self.config == other.config
    }

    /// Time-domain energy implied by the one-sided spectrum, assuming the
    /// analysis window's overlap sums are 1. Divide by the window's
    /// `sum_m w_a^2[n - mH]` to compare with `sum_n x^2`.
    pub fn one_sided_energy(&self) -> T {
        let n = self.config.fft_size;
        let f = self.num_bins();
        let mut acc = T::zero();
        for m in 0..self.num_frames {
            for (k, c) in self.frame(m).iter().enumerate() {
                let w = if k == 0 || k == f - 1 { T::one() } else { T::of(2.0) };
                acc += w * c.norm_sqr();
            }
        }
        acc / T::of(n as f64)
    }

    pub fn cast<U: Real>(&self) -> Spectrogram<U> {
        Spectrogram {
            data: self.data.iter().map(|&c| crate::scalar::cast_complex(c)).collect(),
            num_frames: self.num_frames,
            config: self.config,
            num_samples: self.num_samples,
        }
    }

    /// Frames `0..frames` only (used for causality checks).
    pub fn truncated(&self, frames: usize) -> Spectrogram<T> {
        let frames = frames.min(self.num_frames);
        Spectrogram {
            data: self.data[..frames * self.num_bins()].to_vec(),
            num_frames: frames,
            config: self.config,
            num_samples: (frames * self.config.hop_size).min(self.num_samples),
        }
    }
}

impl<T: Real> std::ops::Sub for &Spectrogram<T> {
    type Output = Spectrogram<T>;

    fn sub(self, rhs: &Spectrogram<T>) -> Spectrogram<T> {
        assert!(self.same_shape(rhs), "spectrogram shape mismatch");
        let mut out = self.clone();
        for (o, r) in out.data.iter_mut().zip(&rhs.data) {
            *o -= r;
        }
        out
    }
}

struct Plan<T> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> Plan<T> {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Plan {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

/// Short-time Fourier transform with the framing described on [`StftConfig`].
pub fn stft<T: Real>(signal: &TimeSignal<T>, config: &StftConfig) -> Result<Spectrogram<T>> {
    if signal.is_empty() {
        return Err(AecError::EmptyInput);
    }
    config.validate()?;
    let n = config.fft_size;
    let hop = config.hop_size;
    let bins = config.num_bins();
    let frames = config.num_frames(signal.len());
    let pad = config.front_padding();
    let window = config.analysis_window::<T>();
    let plan = Plan::<T>::new(n);

    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![czero::<T>(); n];
    let mut scratch = vec![czero::<T>(); plan.forward.get_inplace_scratch_len()];
    for m in 0..frames {
        let start = (m * hop) as isize - pad as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            let v = if idx >= 0 && (idx as usize) < signal.len() {
                signal.samples[idx as usize] * window[i]
            } else {
                T::zero()
            };
            *slot = Complex::new(v, T::zero());
        }
        plan.forward.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram {
        data,
        num_frames: frames,
        config: *config,
        num_samples: signal.len(),
    })
}

/// Inverse STFT by weighted overlap-add; returns `spec.num_samples()` samples.
pub fn istft<T: Real>(spec: &Spectrogram<T>, sample_rate: u32) -> Result<TimeSignal<T>> {
    let config = spec.config;
    config.validate()?;
    let n = config.fft_size;
    let hop = config.hop_size;
    let bins = config.num_bins();
    let pad = config.front_padding();
    let window = config.synthesis_window::<T>();
    let norm = T::one() / (config.cola_gain::<T>() * T::of(n as f64));
    let plan = Plan::<T>::new(n);

    let total = if spec.num_frames == 0 {
        0
    } else {
        (spec.num_frames - 1) * hop + n
    };
    let mut acc = vec![T::zero(); total];
    let mut buf = vec![czero::<T>(); n];
    let mut scratch = vec![czero::<T>(); plan.inverse.get_inplace_scratch_len()];
    for m in 0..spec.num_frames {
        let frame = spec.frame(m);
        buf[..bins].copy_from_slice(frame);
        // The DC and Nyquist imaginary parts carry no real-signal content.
        buf[0].im = T::zero();
        buf[bins - 1].im = T::zero();
        for k in 1..bins - 1 {
            buf[n - k] = frame[k].conj();
        }
        plan.inverse.process_with_scratch(&mut buf, &mut scratch);
        let start = m * hop;
        for (i, c) in buf.iter().enumerate() {
            acc[start + i] += c.re * window[i] * norm;
        }
    }
    let mut samples: Vec<T> = acc.into_iter().skip(pad).collect();
    samples.resize(spec.num_samples, T::zero());
    Ok(TimeSignal::new(samples, sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> TimeSignal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TimeSignal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000)
    }

    #[test]
    fn paper_config_frame_count() {
        let cfg = StftConfig::default();
        let spec = stft(&TimeSignal::<f64>::zeros(8 * 16_000, 16_000), &cfg).unwrap();
        assert_eq!(spec.num_bins(), 513);
        assert_eq!(spec.num_frames(), 503);
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let spec = stft(&TimeSignal::<f64>::zeros(3000, 16_000), &StftConfig::default()).unwrap();
        assert!(spec.data().iter().all(|c| c.norm() == 0.0));
        let back = istft(&Spectrogram::<f64>::zeros(StftConfig::default(), 10), 16_000).unwrap();
        assert!(back.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_signal_is_rejected() {
        let err = stft(&TimeSignal::<f64>::zeros(0, 16_000), &StftConfig::default());
        assert!(matches!(err, Err(AecError::EmptyInput)));
    }

    #[test]
    fn non_cola_configs_are_rejected() {
        for cfg in [
            StftConfig::new(1024, 1000, WindowKind::SqrtHann),
            StftConfig::new(1024, 1024, WindowKind::SqrtHann),
            StftConfig::new(1024, 1024, WindowKind::Hann),
            StftConfig {
                window_length: 512,
                ..StftConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
            assert!(matches!(
                stft(&noise(100, 1), &cfg),
                Err(AecError::InvalidConfig(_))
            ));
        }
        StftConfig::new(1024, 512, WindowKind::Hann).validate().unwrap();
        StftConfig::new(512, 128, WindowKind::SqrtHann).validate().unwrap();
    }

    #[test]
    fn overlap_sums_are_constant() {
        for cfg in [
            StftConfig::default(),
            StftConfig::new(1024, 512, WindowKind::SqrtHann),
            StftConfig::new(256, 64, WindowKind::Hann),
        ] {
            let sums = cfg.overlap_sums::<f64>();
            let first = sums[0];
            assert!(sums.iter().all(|s| (s - first).abs() < 1e-10), "{cfg:?}");
        }
    }

    #[test]
    fn bin_centered_sinusoid_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let k0 = 37;
        let x: Vec<f64> = (0..4096)
            .map(|n| (std::f64::consts::TAU * k0 as f64 * n as f64 / 1024.0).cos())
            .collect();
        let spec = stft(&TimeSignal::new(x.clone(), 16_000), &cfg).unwrap();
        // frame 6 lies entirely inside the signal
        let m = 6;
        let frame = spec.frame(m);
        let peak = frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(peak, k0);

        // direct DFT of the same windowed frame
        let w = cfg.analysis_window::<f64>();
        let start = m * cfg.hop_size - cfg.front_padding();
        for k in [0usize, 5, k0, 100, 512] {
            let mut acc = Complex::new(0.0, 0.0);
            for i in 0..1024 {
                let ang = -std::f64::consts::TAU * (k * i) as f64 / 1024.0;
                acc += Complex::from_polar(x[start + i] * w[i], ang);
            }
            assert!((acc - frame[k]).norm() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn round_trip_reconstructs_every_sample() {
        for cfg in [
            StftConfig::default(),
            StftConfig::new(1024, 512, WindowKind::Hann),
            StftConfig::new(64, 16, WindowKind::SqrtHann),
        ] {
            for len in [1usize, 100, 1023, 16_000] {
                let x = noise(len, len as u64);
                let y = istft(&stft(&x, &cfg).unwrap(), 16_000).unwrap();
                assert_eq!(y.len(), len);
                let err = x
                    .samples
                    .iter()
                    .zip(&y.samples)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-12, "{cfg:?} len {len}: {err}");
            }
        }
    }

    #[test]
    fn single_precision_round_trip() {
        let x = noise(16_000, 3).cast::<f32>();
        let y = istft(&stft(&x, &StftConfig::default()).unwrap(), 16_000).unwrap();
        let err = x
            .samples
            .iter()
            .zip(&y.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn one_sided_energy_matches_time_energy() {
        let cfg = StftConfig::default();
        let x = noise(20_000, 9);
        let spec = stft(&x, &cfg).unwrap();
        // sqrt-Hann at hop N/4: sum_m w_a^2 = 2
        let ratio = spec.one_sided_energy() / (2.0 * x.energy());
        assert!((ratio - 1.0).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn stft_is_linear() {
        let cfg = StftConfig::default();
        let a = noise(5000, 1);
        let b = noise(5000, 2);
        let mix = TimeSignal::new(
            a.samples
                .iter()
                .zip(&b.samples)
                .map(|(x, y)| 0.7 * x - 2.5 * y)
                .collect(),
            16_000,
        );
        let sa = stft(&a, &cfg).unwrap();
        let sb = stft(&b, &cfg).unwrap();
        let sm = stft(&mix, &cfg).unwrap();
        for ((p, q), r) in sa.data().iter().zip(sb.data()).zip(sm.data()) {
            assert!((p * 0.7 - q * 2.5 - r).norm() < 1e-10);
        }
    }
}
