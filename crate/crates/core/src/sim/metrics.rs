//! Echo return loss enhancement and signal-to-distortion ratio.

use crate::error::{AecError, Result};
use crate::signal::TimeSignal;

/// Ceiling applied to dB values before they are written to reports.
pub const REPORT_CAP_DB: f64 = 99.0;

pub fn cap_db(v: f64) -> f64 {
    v.min(REPORT_CAP_DB)
}

fn ratio_db(reference: &[f64], estimate: &[f64]) -> f64 {
    let num: f64 = reference.iter().map(|v| v * v).sum();
    let den: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - e) * (r - e))
        .sum();
    if den == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

fn check(a: &TimeSignal<f64>, b: &TimeSignal<f64>, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(AecError::shape(format!(
            "{what}: reference has {} samples, estimate {}",
            a.len(),
            b.len()
        )));
    }
    if a.samples.iter().all(|&v| v == 0.0) {
        return Err(AecError::DegenerateInput(format!("{what}: reference has zero energy")));
    }
    Ok(())
}

/// `10 log10(sum d^2 / sum (d - d_hat)^2)` over the whole clip; `+inf` when
/// the estimate is exact.
pub fn erle(d: &TimeSignal<f64>, d_hat: &TimeSignal<f64>) -> Result<f64> {
    check(d, d_hat, "erle")?;
    Ok(ratio_db(&d.samples, &d_hat.samples))
}

/// `10 log10(sum s^2 / sum (s - s_hat)^2)` without any alignment search.
pub fn sdr(s: &TimeSignal<f64>, s_hat: &TimeSignal<f64>) -> Result<f64> {
    check(s, s_hat, "sdr")?;
    Ok(ratio_db(&s.samples, &s_hat.samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Start of the window in seconds.
    pub time: f64,
    /// ERLE of the window; `None` marks a window without echo to measure.
    pub erle_db: Option<f64>,
}

/// Windowed ERLE. Points start every `hop` samples; the last windows are
/// shortened at the end of the signal. Windows whose echo energy is below
/// -60 dB of the clip's average per-window energy are gaps.
pub fn erle_curve(
    d: &TimeSignal<f64>,
    d_hat: &TimeSignal<f64>,
    window: usize,
    hop: usize,
) -> Result<Vec<CurvePoint>> {
    if hop == 0 || window < hop {
        return Err(AecError::config(format!(
            "need window >= hop >= 1, got window {window}, hop {hop}"
        )));
    }
    if d.len() != d_hat.len() {
        return Err(AecError::shape("erle_curve: length mismatch"));
    }
    let n = d.len();
    let total: f64 = d.energy();
    let floor = 1e-6 * total * window as f64 / n.max(1) as f64;
    let mut out = Vec::with_capacity(n.div_ceil(hop));
    let mut start = 0;
    while start < n {
        let end = (start + window).min(n);
        let seg = &d.samples[start..end];
        let energy: f64 = seg.iter().map(|v| v * v).sum();
        let erle_db = if energy <= floor || energy == 0.0 {
            None
        } else {
            Some(ratio_db(seg, &d_hat.samples[start..end]))
        };
        out.push(CurvePoint {
            time: start as f64 / d.sample_rate as f64,
            erle_db,
        });
        start += hop;
    }
    Ok(out)
}
