use num_complex::Complex;

use crate::error::{AecError, Result};
use crate::signal::Spectrogram;

/// `Σ_m Σ_k |D[m,k] - D̂[m,k]|²` over every frame and bin.
pub fn echo_loss(d: &Spectrogram<f64>, d_hat: &Spectrogram<f64>) -> Result<f64> {
    if !d.same_shape(d_hat) {
        return Err(AecError::shape(format!(
            "target is {}x{}, estimate is {}x{}",
            d.num_frames(),
            d.num_bins(),
            d_hat.num_frames(),
            d_hat.num_bins()
        )));
    }
    Ok(d.data().iter().zip(d_hat.data()).map(|(a, b)| (a - b).norm_sqr()).sum())
}

/// Gradient of [`echo_loss`] w.r.t. `d_hat`: `2 (D̂ - D)` per entry, in the
/// `∂L/∂re + i ∂L/∂im` convention.
pub fn echo_loss_grad(d: &Spectrogram<f64>, d_hat: &Spectrogram<f64>) -> Result<Vec<Complex<f64>>> {
    if !d.same_shape(d_hat) {
        return Err(AecError::shape("target and estimate differ in shape"));
    }
    Ok(d.data().iter().zip(d_hat.data()).map(|(a, b)| (b - a) * 2.0).collect())
}
