use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{AecError, Result};
use crate::scalar::{czero, dot_conj, Real};
use crate::signal::ctf::CtfWindow;
use crate::signal::{CtfInputVector, Spectrogram};

/// How the near-end power `|S[m,k]|^2` in the gain denominator is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationNoise {
    /// Exponential average of the prior error power with smoothing `beta`,
    /// updated with the current frame's error before the gain is formed.
    Tracked { beta: f64 },
    /// A constant supplied by the caller.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfdkfConfig {
    /// CTF taps `L` per bin.
    pub taps: usize,
    /// State transition `A` in (0, 1].
    pub transition: f64,
    /// Forgetting factor of the running `E[h h^H]` used for `Q`.
    pub q_forgetting: f64,
    pub obs_noise: ObservationNoise,
    /// Added to the gain denominator.
    pub regularizer: f64,
    /// Initial misalignment covariance is `p_init_scale * I`.
    pub p_init_scale: f64,
}

impl Default for TfdkfConfig {
    fn default() -> Self {
        TfdkfConfig {
            taps: 4,
            transition: 0.999,
            q_forgetting: 0.99,
            obs_noise: ObservationNoise::Tracked { beta: 0.8 },
            regularizer: 1e-10,
            p_init_scale: 1.0,
        }
    }
}

impl TfdkfConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AecError::config(m.to_string()));
        if self.taps == 0 {
            return bad("taps must be >= 1");
        }
        if !(self.transition > 0.0 && self.transition <= 1.0) {
            return bad("transition must lie in (0, 1]");
        }
        if !(self.q_forgetting > 0.0 && self.q_forgetting < 1.0) {
            return bad("q_forgetting must lie in (0, 1)");
        }
        match self.obs_noise {
            ObservationNoise::Tracked { beta } if !(0.0..1.0).contains(&beta) => {
                return bad("obs smoothing must lie in [0, 1)")
            }
            ObservationNoise::Fixed(v) if !(v >= 0.0) => return bad("fixed noise must be >= 0"),
            _ => {}
        }
        if !(self.regularizer > 0.0) {
            return bad("regularizer must be positive");
        }
        if !(self.p_init_scale > 0.0) {
            return bad("p_init_scale must be positive");
        }
        Ok(())
    }
}

/// Kalman state of one frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct TfdkfState<T> {
    /// Posterior echo-path estimate.
    pub h_hat: Vec<Complex<T>>,
    /// Posterior misalignment covariance, row-major `L x L`.
    pub p: Vec<Complex<T>>,
    /// Running `E[h h^H]`.
    pub q_acc: Vec<Complex<T>>,
    /// Smoothed near-end power.
    pub s_pow: T,
}

/// Per-frame outputs of [`TfdkfState::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct TfdkfStep<T> {
    /// Echo-cancelled output using the posterior estimate.
    pub s_hat: Complex<T>,
    /// Prior error.
    pub error: Complex<T>,
    pub gain: Vec<Complex<T>>,
    /// Largest `|P - P^H|` entry before re-symmetrization.
    pub hermitian_drift: T,
}

impl<T: Real> TfdkfState<T> {
    pub fn new(config: &TfdkfConfig) -> Self {
        let l = config.taps;
        let mut p = vec![czero(); l * l];
        for i in 0..l {
            p[i * l + i] = Complex::new(T::of(config.p_init_scale), T::zero());
        }
        TfdkfState {
            h_hat: vec![czero(); l],
            p,
            q_acc: vec![czero(); l * l],
            s_pow: T::zero(),
        }
    }

    pub fn taps(&self) -> usize {
        self.h_hat.len()
    }

    /// One prediction/update cycle for far-end frames `x` and mic bin value `y`.
    pub fn step(&mut self, config: &TfdkfConfig, x: &[Complex<T>], y: Complex<T>) -> Result<TfdkfStep<T>> {
        let l = self.taps();
        if x.len() != l {
            return Err(AecError::shape(format!("expected {l} taps, got {}", x.len())));
        }
        if !y.re.is_finite() || !y.im.is_finite() || x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(AecError::Numerical("non-finite TFDKF input".into()));
        }
        let a = T::of(config.transition);
        let q_scale = T::one() - a * a;

        // prediction
        for h in &mut self.h_hat {
            *h = *h * a;
        }
        for (p, q) in self.p.iter_mut().zip(&self.q_acc) {
            *p = *p * (a * a) + *q * q_scale;
        }

        let error = y - dot_conj(&self.h_hat, x);
        self.s_pow = match config.obs_noise {
            ObservationNoise::Tracked { beta } => {
                let beta = T::of(beta);
                beta * self.s_pow + (T::one() - beta) * error.norm_sqr()
            }
            ObservationNoise::Fixed(v) => T::of(v),
        };

        // P x and x^H P x
        let px: Vec<Complex<T>> = (0..l)
            .map(|i| {
                let row = &self.p[i * l..(i + 1) * l];
                row.iter().zip(x).fold(czero(), |acc, (p, xv)| acc + p * xv)
            })
            .collect();
        let xpx = dot_conj(x, &px).re;
        let den = xpx + self.s_pow + T::of(config.regularizer);
        let gain: Vec<Complex<T>> = px.iter().map(|v| v / den).collect();

        // Observation model Y* = x^H h, so the innovation enters conjugated.
        let innovation = error.conj();
        for (h, k) in self.h_hat.iter_mut().zip(&gain) {
            *h += k * innovation;
        }

        // P+ = (I - k x^H) P = P - k (P x)^H for Hermitian P
        for i in 0..l {
            for j in 0..l {
                self.p[i * l + j] -= gain[i] * px[j].conj();
            }
        }
        let mut drift = T::zero();
        for i in 0..l {
            for j in i..l {
                let pij = self.p[i * l + j];
                let pji = self.p[j * l + i];
                drift = drift.max((pij - pji.conj()).norm());
                let avg = (pij + pji.conj()) * T::of(0.5);
                self.p[i * l + j] = avg;
                self.p[j * l + i] = avg.conj();
            }
            let d = self.p[i * l + i].re.max(T::zero());
            self.p[i * l + i] = Complex::new(d, T::zero());
        }

        let s_hat = y - dot_conj(&self.h_hat, x);

        let lambda = T::of(config.q_forgetting);
        for i in 0..l {
            for j in 0..l {
                let outer = self.h_hat[i] * self.h_hat[j].conj();
                let q = &mut self.q_acc[i * l + j];
                *q = *q * lambda + outer * (T::one() - lambda);
            }
        }

        if !s_hat.re.is_finite() || !s_hat.im.is_finite() {
            return Err(AecError::Numerical("TFDKF output became non-finite".into()));
        }
        Ok(TfdkfStep {
            s_hat,
            error,
            gain,
            hermitian_drift: drift,
        })
    }

    /// Convenience wrapper taking a stacked input vector.
    pub fn step_vector(
        &mut self,
        config: &TfdkfConfig,
        x: &CtfInputVector<T>,
        y: Complex<T>,
    ) -> Result<TfdkfStep<T>> {
        self.step(config, &x.values, y)
    }
}

fn run_bin<T: Real>(
    config: &TfdkfConfig,
    far: &[Complex<T>],
    mic: &[Complex<T>],
) -> Result<Vec<Complex<T>>> {
    let mut state = TfdkfState::new(config);
    let mut window = CtfWindow::new(far, config.taps);
    (0..far.len())
        .map(|m| state.step(config, window.at(m), mic[m]).map(|s| s.s_hat))
        .collect()
}

/// Runs an independent TFDKF in every bin and returns the echo-cancelled
/// spectrogram. Bins are processed in parallel on the current rayon pool.
pub fn tfdkf_run<T: Real>(
    far: &Spectrogram<T>,
    mic: &Spectrogram<T>,
    config: &TfdkfConfig,
) -> Result<Spectrogram<T>> {
    config.validate()?;
    if !far.same_shape(mic) {
        return Err(AecError::shape(format!(
            "far is {}x{}, mic is {}x{}",
            far.num_frames(),
            far.num_bins(),
            mic.num_frames(),
            mic.num_bins()
        )));
    }
    let columns: Vec<Vec<Complex<T>>> = (0..far.num_bins())
        .into_par_iter()
        .map(|k| run_bin(config, &far.bin(k), &mic.bin(k)))
        .collect::<Result<_>>()?;
    let mut out = mic.clone();
    for (k, col) in columns.iter().enumerate() {
        out.set_bin(k, col);
    }
    Ok(out)
}
