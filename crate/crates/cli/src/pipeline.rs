//! Running one canceller over a far-end/microphone pair in the time domain.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nkf_core::filters::{pnlms_run, tfdkf_run, PnlmsConfig, TfdkfConfig};
use nkf_core::nkf::{load_weights, nkf_run, verify_weights, ModelWeights, NkfConfig};
use nkf_core::scalar::Real;
use nkf_core::signal::{istft, stft, StftConfig, TimeSignal};
use nkf_core::sim::{cap_db, erle, sdr};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pnlms,
    Tfdkf,
    Nkf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pnlms => "pnlms",
            Method::Tfdkf => "tfdkf",
            Method::Nkf => "nkf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pnlms" => Ok(Method::Pnlms),
            "tfdkf" => Ok(Method::Tfdkf),
            "nkf" => Ok(Method::Nkf),
            other => Err(format!("unknown method {other:?} (expected pnlms, tfdkf or nkf)")),
        }
    }
}

/// Parses a comma-separated method list, keeping the given order.
pub fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: Method = part.parse().map_err(CliError::Config)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::config("no methods given"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision {other:?} (expected f32 or f64)")),
        }
    }
}

/// A configured canceller ready to process clips.
#[derive(Debug, Clone)]
pub struct Canceller {
    pub method: Method,
    pub precision: Precision,
    pub stft: StftConfig,
    pub tfdkf: TfdkfConfig,
    pub pnlms: PnlmsConfig,
    pub nkf: NkfConfig,
    weights: Option<ModelWeights<f64>>,
}

impl Canceller {
    /// NKF needs `weights`; the other methods ignore it.
    pub fn new(method: Method, precision: Precision, weights: Option<&Path>) -> CliResult<Canceller> {
        let mut nkf = NkfConfig::default();
        let loaded = match (method, weights) {
            (Method::Nkf, None) => {
                return Err(CliError::config("method nkf needs a weight file (--weights)"));
            }
            (Method::Nkf, Some(path)) => {
                verify_weights(path)?;
                let w: ModelWeights<f64> = load_weights(path)?;
                nkf.taps = w.taps();
                Some(w)
            }
            _ => None,
        };
        Ok(Canceller {
            method,
            precision,
            stft: StftConfig::default(),
            tfdkf: TfdkfConfig::default(),
            pnlms: PnlmsConfig::default(),
            nkf,
            weights: loaded,
        })
    }

    /// Builds an NKF canceller from in-memory weights.
    pub fn with_weights(weights: ModelWeights<f64>, precision: Precision) -> Canceller {
        Canceller {
            method: Method::Nkf,
            precision,
            stft: StftConfig::default(),
            tfdkf: TfdkfConfig::default(),
            pnlms: PnlmsConfig::default(),
            nkf: NkfConfig::with_taps(weights.taps()),
            weights: Some(weights),
        }
    }

    pub fn weights(&self) -> Option<&ModelWeights<f64>> {
        self.weights.as_ref()
    }

    /// Near-end estimate `s_hat`, same length as `mic`.
    pub fn cancel(&self, far: &TimeSignal<f64>, mic: &TimeSignal<f64>) -> CliResult<TimeSignal<f64>> {
        if far.len() != mic.len() {
            return Err(CliError::config(format!(
                "far has {} samples, mic has {}",
                far.len(),
                mic.len()
            )));
        }
        match self.precision {
            Precision::F32 => self.cancel_in::<f32>(far, mic),
            Precision::F64 => self.cancel_in::<f64>(far, mic),
        }
    }

    fn cancel_in<T: Real>(&self, far: &TimeSignal<f64>, mic: &TimeSignal<f64>) -> CliResult<TimeSignal<f64>> {
        let far = far.cast::<T>();
        let mic = mic.cast::<T>();
        let out = match self.method {
            Method::Pnlms => pnlms_run(&far, &mic, &self.pnlms)?,
            Method::Tfdkf | Method::Nkf => {
                let x = stft(&far, &self.stft)?;
                let y = stft(&mic, &self.stft)?;
                let s = if self.method == Method::Tfdkf {
                    tfdkf_run(&x, &y, &self.tfdkf)?
                } else {
                    let w = self.weights.as_ref().expect("nkf canceller holds weights").cast::<T>();
                    nkf_run(&x, &y, &w, &self.nkf)?
                };
                let mut s = istft(&s, mic.sample_rate)?;
                s.samples.truncate(mic.len());
                s
            }
        };
        if out.samples.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Numeric(format!("{} produced non-finite output", self.method)));
        }
        Ok(out.cast())
    }

    /// Like [`Canceller::cancel`], also returning the real-time factor.
    pub fn cancel_timed(
        &self,
        far: &TimeSignal<f64>,
        mic: &TimeSignal<f64>,
    ) -> CliResult<(TimeSignal<f64>, f64)> {
        let start = Instant::now();
        let out = self.cancel(far, mic)?;
        let rtf = start.elapsed().as_secs_f64() / mic.duration_secs().max(f64::MIN_POSITIVE);
        Ok((out, rtf))
    }
}

/// Echo estimate implied by a near-end estimate: `d_hat = y - s_hat`.
pub fn echo_estimate(mic: &TimeSignal<f64>, s_hat: &TimeSignal<f64>) -> TimeSignal<f64> {
    let samples = mic.samples.iter().zip(&s_hat.samples).map(|(y, s)| y - s).collect();
    TimeSignal::new(samples, mic.sample_rate)
}

/// Clip scores in dB, capped for reporting. SDR is absent when the clip has
/// no near-end speech.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipScore {
    pub erle_db: f64,
    pub sdr_db: Option<f64>,
}

pub fn score(
    echo: &TimeSignal<f64>,
    near: &TimeSignal<f64>,
    mic: &TimeSignal<f64>,
    s_hat: &TimeSignal<f64>,
) -> CliResult<ClipScore> {
    let erle_db = cap_db(erle(echo, &echo_estimate(mic, s_hat))?);
    let sdr_db = if near.samples.iter().any(|&v| v != 0.0) {
        Some(cap_db(sdr(near, s_hat)?))
    } else {
        None
    };
    Ok(ClipScore { erle_db, sdr_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nkf_core::sim::speech_like;

    #[test]
    fn method_lists_parse_in_order_without_duplicates() {
        assert_eq!(parse_methods("tfdkf, nkf,tfdkf").unwrap(), vec![Method::Tfdkf, Method::Nkf]);
        assert!(parse_methods("").is_err());
        assert!(parse_methods("kalman").is_err());
        assert_eq!("NKF".parse::<Method>().unwrap(), Method::Nkf);
    }

    #[test]
    fn nkf_without_weights_is_a_config_error() {
        let err = Canceller::new(Method::Nkf, Precision::F32, None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn silent_far_end_passes_mic_through_for_every_method() {
        let mic = speech_like(8000, 3);
        let far = TimeSignal::zeros(8000, 16_000);
        let nkf_w = ModelWeights::init(&NkfConfig::default(), 1);
        for method in [Method::Pnlms, Method::Tfdkf, Method::Nkf] {
            let c = match method {
                Method::Nkf => Canceller::with_weights(nkf_w.clone(), Precision::F64),
                m => Canceller::new(m, Precision::F64, None).unwrap(),
            };
            let s = c.cancel(&far, &mic).unwrap();
            let err = s.samples.iter().zip(&mic.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{method}: {err}");
            let echo = TimeSignal::zeros(8000, 16_000);
            assert!(score(&echo, &mic, &mic, &s).is_err());
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let c = Canceller::new(Method::Tfdkf, Precision::F64, None).unwrap();
        let err = c.cancel(&speech_like(100, 1), &speech_like(200, 2)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
