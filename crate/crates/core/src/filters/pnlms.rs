use crate::error::{AecError, Result};
use crate::scalar::Real;
use crate::signal::TimeSignal;

/// Proportionate NLMS parameters. `rho = 1` turns the filter into plain NLMS.
#[derive(Debug, Clone, PartialEq)]
pub struct PnlmsConfig {
    pub filter_len: usize,
    /// Step size in (0, 2).
    pub step: f64,
    /// Floor on the largest coefficient magnitude used for the gains; keeps
    /// adaptation going from an all-zero filter.
    pub delta_p: f64,
    /// Minimum gain of any tap relative to the largest one.
    pub rho: f64,
    /// Added to the normalization `x^T G x`.
    pub regularizer: f64,
}

impl Default for PnlmsConfig {
    fn default() -> Self {
        PnlmsConfig {
            filter_len: 1024,
            step: 0.5,
            delta_p: 0.01,
            rho: 0.01,
            regularizer: 1e-2,
        }
    }
}

impl PnlmsConfig {
    pub fn nlms(filter_len: usize, step: f64) -> Self {
        PnlmsConfig {
            filter_len,
            step,
            rho: 1.0,
            ..PnlmsConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_len == 0 {
            return Err(AecError::config("filter_len must be >= 1"));
        }
        if !(0.0..2.0).contains(&self.step) {
            return Err(AecError::config("step must lie in [0, 2)"));
        }
        if !(self.delta_p > 0.0 && self.rho > 0.0 && self.rho <= 1.0 && self.regularizer > 0.0) {
            return Err(AecError::config("delta_p, rho and regularizer must be positive, rho <= 1"));
        }
        Ok(())
    }
}

/// Sample-by-sample proportionate NLMS echo canceller.
#[derive(Debug, Clone)]
pub struct PnlmsFilter<T> {
    config: PnlmsConfig,
    h: Vec<T>,
    /// Far-end history, doubled to avoid wrap-around; newest at `pos`.
    history: Vec<T>,
    pos: usize,
    gains: Vec<T>,
}

impl<T: Real> PnlmsFilter<T> {
    pub fn new(config: PnlmsConfig) -> Result<Self> {
        config.validate()?;
        let n = config.filter_len;
        Ok(PnlmsFilter {
            config,
            h: vec![T::zero(); n],
            history: vec![T::zero(); 2 * n],
            pos: 0,
            gains: vec![T::zero(); n],
        })
    }

    pub fn coefficients(&self) -> &[T] {
        &self.h
    }

    /// Feeds one far-end and one mic sample; returns the error (echo-cancelled) sample.
    pub fn process(&mut self, far: T, mic: T) -> T {
        let n = self.config.filter_len;
        self.pos = if self.pos == 0 { n - 1 } else { self.pos - 1 };
        self.history[self.pos] = far;
        self.history[self.pos + n] = far;
        let x = &self.history[self.pos..self.pos + n];

        let estimate: T = self.h.iter().zip(x).map(|(h, x)| *h * *x).sum();
        let error = mic - estimate;

        let h_max = self.h.iter().fold(T::zero(), |m, h| m.max(h.abs()));
        let l_inf = h_max.max(T::of(self.config.delta_p));
        let floor = T::of(self.config.rho) * l_inf;
        let mut total = T::zero();
        for (g, h) in self.gains.iter_mut().zip(&self.h) {
            *g = floor.max(h.abs());
            total += *g;
        }
        let norm = T::of(n as f64) / total;
        let mut xgx = T::zero();
        for (g, x) in self.gains.iter_mut().zip(x) {
            *g *= norm;
            xgx += *g * *x * *x;
        }
        let scale = T::of(self.config.step) * error / (xgx + T::of(self.config.regularizer));
        for ((h, g), x) in self.h.iter_mut().zip(&self.gains).zip(x) {
            *h += scale * *g * *x;
        }
        error
    }
}

/// Runs PNLMS over whole signals and returns the echo-cancelled output.
pub fn pnlms_run<T: Real>(
    far: &TimeSignal<T>,
    mic: &TimeSignal<T>,
    config: &PnlmsConfig,
) -> Result<TimeSignal<T>> {
    if far.len() != mic.len() {
        return Err(AecError::shape(format!(
            "far has {} samples, mic has {}",
            far.len(),
            mic.len()
        )));
    }
    let mut filter = PnlmsFilter::new(config.clone())?;
    let out = far
        .samples
        .iter()
        .zip(&mic.samples)
        .map(|(&x, &y)| filter.process(x, y))
        .collect();
    Ok(TimeSignal::new(out, mic.sample_rate))
}
