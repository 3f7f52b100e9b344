use super::backprop::{backward, forward_traced};
use super::GradientSet;
use crate::error::Result;
use crate::nkf::{ModelWeights, NkfConfig};
use crate::signal::Spectrogram;

/// Inputs for one gradient check.
#[derive(Debug, Clone)]
pub struct GradSample {
    pub far: Spectrogram<f64>,
    pub mic: Spectrogram<f64>,
    pub echo: Spectrogram<f64>,
    pub config: NkfConfig,
    pub bins: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Worst relative error per tensor, canonical order.
    pub per_tensor: Vec<(String, f64)>,
}

/// Components whose analytic and numeric values are both below this are
/// compared absolutely; central differences cannot resolve them relatively.
const ABS_FLOOR: f64 = 1e-7;

/// `|a - n| / max(|a|, |n|, ABS_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if d == 0.0 {
        0.0
    } else {
        d / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
    }
}

/// Loss of the sample under `weights`.
pub fn sample_loss(weights: &ModelWeights<f64>, sample: &GradSample) -> Result<f64> {
    let trace = forward_traced(weights, &sample.far, &sample.mic, &sample.config, &sample.bins)?;
    Ok(backward_loss_only(&trace, sample))
}

fn backward_loss_only(trace: &super::Trace, sample: &GradSample) -> f64 {
    let mut loss = 0.0;
    for m in 0..trace.num_frames() {
        for (b, &k) in trace.bins().iter().enumerate() {
            loss += (trace.echo_estimate(m, b) - sample.echo.get(m, k)).norm_sqr();
        }
    }
    loss
}

/// Central differences of the loss over every real parameter component.
pub fn numeric_gradient(weights: &ModelWeights<f64>, sample: &GradSample, eps: f64) -> Result<Vec<f64>> {
    let base = weights.to_flat();
    let mut probe = weights.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + eps;
        probe.set_flat(&flat)?;
        let up = sample_loss(&probe, sample)?;
        flat[i] = base[i] - eps;
        probe.set_flat(&flat)?;
        let down = sample_loss(&probe, sample)?;
        flat[i] = base[i];
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

/// Compares an analytic gradient against a numeric one.
pub fn compare_gradients(weights: &ModelWeights<f64>, analytic: &GradientSet, numeric: &[f64]) -> GradCheckReport {
    let a = analytic.to_flat();
    let mut per_tensor: Vec<(String, f64)> = Vec::new();
    let mut worst = (0.0, 0usize);
    for (i, (&ai, &ni)) in a.iter().zip(numeric).enumerate() {
        let r = relative_error(ai, ni);
        let name = weights.tensor_of_flat_index(i).expect("index within model");
        match per_tensor.last_mut() {
            Some((n, v)) if *n == name => *v = v.max(r),
            _ => per_tensor.push((name, r)),
        }
        if r > worst.0 || i == 0 {
            worst = (r, i);
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_tensor: weights.tensor_of_flat_index(worst.1).unwrap_or_default(),
        worst_index: worst.1,
        analytic: a.get(worst.1).copied().unwrap_or(0.0),
        numeric: numeric.get(worst.1).copied().unwrap_or(0.0),
        per_tensor,
    }
}

/// Checks [`backward`] against central differences with step `eps`.
pub fn grad_check(weights: &ModelWeights<f64>, sample: &GradSample, eps: f64) -> Result<GradCheckReport> {
    let trace = forward_traced(weights, &sample.far, &sample.mic, &sample.config, &sample.bins)?;
    let (_, analytic) = backward(weights, &trace, &sample.echo)?;
    let numeric = numeric_gradient(weights, sample, eps)?;
    Ok(compare_gradients(weights, &analytic, &numeric))
}
