//! Reverse-mode gradients through the unrolled canceller recurrence.

use num_complex::Complex;

use super::GradientSet;
use crate::error::{AecError, Result};
use crate::nkf::batch::{Engine, FrameTrace};
use crate::nkf::kernels::{gru_bwd, linear_bwd, prelu_bwd, GruScratch, Planes};
use crate::nkf::{gather_frame, init_batch, ModelWeights, NkfConfig};
use crate::signal::Spectrogram;

/// Forward pass over a subset of bins with every intermediate kept.
pub struct Trace {
    bins: Vec<usize>,
    frames: Vec<FrameTrace<f64>>,
}

impl Trace {
    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Echo estimate `D̂ = ĥ^H x` at frame `m` for the `b`-th traced bin.
    pub fn echo_estimate(&self, m: usize, b: usize) -> Complex<f64> {
        self.frames[m].d_hat.get(0, b)
    }
}

/// Runs the canceller on `bins` of the given spectrograms, recording a trace.
pub fn forward_traced(
    weights: &ModelWeights<f64>,
    far: &Spectrogram<f64>,
    mic: &Spectrogram<f64>,
    config: &NkfConfig,
    bins: &[usize],
) -> Result<Trace> {
    config.validate()?;
    weights.check_shapes(config)?;
    if !far.same_shape(mic) {
        return Err(AecError::shape("far and mic spectrograms differ in shape"));
    }
    if let Some(&k) = bins.iter().find(|&&k| k >= far.num_bins()) {
        return Err(AecError::Index {
            what: "bin",
            index: k,
            limit: far.num_bins(),
        });
    }
    let n = bins.len();
    let mut engine = Engine::new(weights, config.level_norm, n);
    let mut state = init_batch(config, bins);
    let mut x = Planes::zeros(config.taps, n);
    let mut y = Planes::zeros(1, n);
    let mut d_hat = Planes::zeros(1, n);
    let mut frames = Vec::with_capacity(far.num_frames());
    for m in 0..far.num_frames() {
        gather_frame(far, m, bins, &mut x);
        gather_frame(mic, m, bins, &mut y);
        engine.step(weights, &mut state, &x, &y, &mut d_hat, Some(&mut frames));
    }
    Ok(Trace {
        bins: bins.to_vec(),
        frames,
    })
}

/// Loss `Σ |D - D̂|²` over the traced bins and its gradient w.r.t. every
/// parameter. `echo` is the true echo spectrogram `D`.
pub fn backward(weights: &ModelWeights<f64>, trace: &Trace, echo: &Spectrogram<f64>) -> Result<(f64, GradientSet)> {
    let mut grads = GradientSet::zeros_like(weights);
    if echo.num_frames() != trace.num_frames() {
        return Err(AecError::shape(format!(
            "target has {} frames, trace has {}",
            echo.num_frames(),
            trace.num_frames()
        )));
    }
    let n = trace.bins.len();
    let taps = weights.taps();
    let hd = weights.hidden();
    let g = &mut grads.tensors;

    let mut g_h = Planes::zeros(taps, n);
    let mut g_delta = Planes::zeros(taps, n);
    let mut g_g1 = Planes::zeros(hd, n);
    let mut g_g2 = Planes::zeros(hd, n);

    let mut target = Planes::zeros(1, n);
    let mut g_k = Planes::zeros(taps, n);
    let mut g_u2 = Planes::zeros(weights.fc2.outputs, n);
    let mut g_a2 = Planes::zeros(weights.fc2.outputs, n);
    let mut g_g2_out = Planes::zeros(hd, n);
    let mut g_g1_out = Planes::zeros(hd, n);
    let mut g_u1 = Planes::zeros(weights.fc1.outputs, n);
    let mut g_a1 = Planes::zeros(weights.fc1.outputs, n);
    let mut g_z = Planes::zeros(weights.feature_dim(), n);
    let mut scratch = GruScratch::new(hd, n);

    let mut g_e_partial = vec![Complex::new(0.0, 0.0); n];
    let mut loss = 0.0;
    for (m, tr) in trace.frames.iter().enumerate().rev() {
        gather_frame(echo, m, &trace.bins, &mut target);

        for b in 0..n {
            let diff = tr.d_hat.get(0, b) - target.get(0, b);
            loss += diff.norm_sqr();
            let g_dhat = diff * 2.0;
            let e = tr.e.get(0, b);
            let mut g_e = Complex::new(0.0, 0.0);
            for l in 0..taps {
                // D̂ = Σ conj(ĥ'_l) x_l
                let g_hp: Complex<f64> = g_h.get(l, b) + g_dhat.conj() * tr.x.get(l, b);
                // ĥ' = ĥ + Δ; Δ also feeds the next frame's features
                let g_d = g_hp + g_delta.get(l, b);
                // Δ = k conj(e)
                g_k.set(l, b, g_d * e);
                g_e += g_d.conj() * tr.k.get(l, b);
                g_h.set(l, b, g_hp);
            }
            g_e_partial[b] = g_e;
            // k = k_net / σ
            for l in 0..taps {
                let v = g_k.get(l, b) * tr.inv_level[b];
                g_k.set(l, b, v);
            }
        }

        g_u2.fill_zero();
        linear_bwd(&weights.fc3.w, &tr.u2, &g_k, Some(&mut g_u2), &mut g.fc3.w, &mut g.fc3.b);
        prelu_bwd(&weights.prelu2, &tr.a2, &g_u2, &mut g_a2, &mut g.prelu2);
        g_g2_out.clone_from(&g_g2);
        linear_bwd(&weights.fc2.w, &tr.g2, &g_a2, Some(&mut g_g2_out), &mut g.fc2.w, &mut g.fc2.b);

        g_g1_out.clone_from(&g_g1);
        g_g2.fill_zero();
        gru_bwd(&weights.gru2, &tr.g1, &tr.g2_prev, &tr.gru2, &g_g2_out, &mut g_g1_out, &mut g_g2, &mut g.gru2, &mut scratch);
        g_u1.fill_zero();
        g_g1.fill_zero();
        gru_bwd(&weights.gru1, &tr.u1, &tr.g1_prev, &tr.gru1, &g_g1_out, &mut g_u1, &mut g_g1, &mut g.gru1, &mut scratch);
        prelu_bwd(&weights.prelu1, &tr.a1, &g_u1, &mut g_a1, &mut g.prelu1);
        g_z.fill_zero();
        linear_bwd(&weights.fc1.w, &tr.z, &g_a1, Some(&mut g_z), &mut g.fc1.w, &mut g.fc1.b);

        for b in 0..n {
            // the network sees e/σ
            let g_e = g_e_partial[b] + g_z.get(2 * taps, b) * tr.inv_level[b];
            for l in 0..taps {
                g_delta.set(l, b, g_z.get(taps + l, b));
                // e = Y - Σ conj(ĥ_l) x_l
                let v = g_h.get(l, b) - g_e.conj() * tr.x.get(l, b);
                g_h.set(l, b, v);
            }
        }
    }
    grads.check_finite()?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nkf::{init_state, nkf_gain, InitMode, TensorMut};
    use crate::signal::{StftConfig, WindowKind};
    use crate::train::{compare_gradients, grad_check, GradSample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn rand_spec(rng: &mut ChaCha8Rng, frames: usize, scale: f64) -> Spectrogram<f64> {
        let cfg = StftConfig::new(8, 2, WindowKind::SqrtHann);
        let data = (0..frames * cfg.num_bins())
            .map(|_| C::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
            .collect();
        Spectrogram::from_data(cfg, frames, data, frames * 2).unwrap()
    }

    fn weights(taps: usize, seed: u64) -> ModelWeights<f64> {
        let mut w = ModelWeights::init(&NkfConfig::with_taps(taps), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        w.visit_mut(|name, t| {
            if let TensorMut::Complex(c) = t {
                if name.contains("bias") {
                    c.iter_mut()
                        .for_each(|v| *v = C::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)));
                }
            }
        });
        w
    }

    fn sample(taps: usize, frames: usize, bins: Vec<usize>, mode: InitMode, seed: u64) -> GradSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GradSample {
            far: rand_spec(&mut rng, frames, 1.0),
            mic: rand_spec(&mut rng, frames, 1.0),
            echo: rand_spec(&mut rng, frames, 1.0),
            config: NkfConfig {
                taps,
                init_mode: mode,
                init_seed: seed,
                ..NkfConfig::default()
            },
            bins,
        }
    }

    #[test]
    fn traced_forward_matches_inference() {
        let w = weights(2, 1);
        let s = sample(2, 6, vec![0, 1, 2, 3, 4], InitMode::Noise, 2);
        let out = crate::nkf::nkf_run(&s.far, &s.mic, &w, &s.config).unwrap();
        let tr = forward_traced(&w, &s.far, &s.mic, &s.config, &s.bins).unwrap();
        for m in 0..6 {
            for k in 0..5 {
                let d_hat = s.mic.get(m, k) - out.get(m, k);
                assert!((tr.echo_estimate(m, k) - d_hat).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_trace_has_zero_gradient() {
        let w = weights(2, 3);
        let s = sample(2, 0, vec![0, 1], InitMode::Zeros, 4);
        let tr = forward_traced(&w, &s.far, &s.mic, &s.config, &s.bins).unwrap();
        let (loss, g) = backward(&w, &tr, &s.echo).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_step_bias_gradient_matches_hand_derivation() {
        // One frame from a zero state with level σ = sqrt(|x|² + |Y|² + floor):
        // e = Y, k = F(x/σ, 0, Y/σ)/σ, ĥ' = k conj(Y), D̂ = conj(k) Y x,
        // L = |conj(k) Y x - D|², so ∂L/∂b3 = 2 conj(conj(k) Y x - D) Y x / σ.
        let w = weights(1, 5);
        let s = sample(1, 1, vec![2], InitMode::Zeros, 6);
        let (x, y, d) = (s.far.get(0, 2), s.mic.get(0, 2), s.echo.get(0, 2));
        let sigma = (x.norm_sqr() + y.norm_sqr() + 1e-8).sqrt();
        let z = vec![x / sigma, C::new(0.0, 0.0), y / sigma];
        let st: crate::nkf::NkfState<f64> = init_state(&s.config, 0);
        let (k, _, _) = nkf_gain(&z, &st.g1, &st.g2, &w).unwrap();
        let k = k[0] / sigma;
        let r = k.conj() * y * x - d;
        let want = r.conj() * y * x * 2.0 / sigma;
        let tr = forward_traced(&w, &s.far, &s.mic, &s.config, &s.bins).unwrap();
        let (loss, g) = backward(&w, &tr, &s.echo).unwrap();
        assert!((loss - r.norm_sqr()).abs() < 1e-12);
        assert!((g.tensors.fc3.b[0] - want).norm() < 1e-12 * want.norm().max(1.0));
    }

    #[test]
    fn finite_differences_agree_on_tiny_config() {
        let level = Some(crate::nkf::LevelNorm::default());
        for (mode, level_norm, seed) in [(InitMode::Zeros, level, 7), (InitMode::Noise, level, 8), (InitMode::Noise, None, 9)] {
            let w = weights(2, seed);
            let mut s = sample(2, 3, vec![0, 1, 3, 4], mode, seed + 1);
            s.config.level_norm = level_norm;
            let report = grad_check(&w, &s, 1e-5).unwrap();
            assert!(
                report.max_relative_error < 1e-4,
                "{mode:?}: {} in {} (analytic {}, numeric {})",
                report.max_relative_error,
                report.worst_tensor,
                report.analytic,
                report.numeric
            );
        }
    }

    #[test]
    fn corrupted_tensor_is_named() {
        let w = weights(2, 9);
        let s = sample(2, 3, vec![0, 2], InitMode::Zeros, 10);
        let tr = forward_traced(&w, &s.far, &s.mic, &s.config, &s.bins).unwrap();
        let (_, g) = backward(&w, &tr, &s.echo).unwrap();
        let numeric = g.to_flat();
        let clean = compare_gradients(&w, &g, &numeric);
        assert_eq!(clean.max_relative_error, 0.0);
        let mut bad = g.clone();
        bad.tensors.gru2.w_hh[3] += C::new(0.5, 0.0);
        let report = compare_gradients(&w, &bad, &numeric);
        assert_eq!(report.worst_tensor, "gru2.weight_hh");
        assert!(report.max_relative_error > 1e-3);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let w = weights(2, 11);
        let mut g = GradientSet::zeros_like(&w);
        g.tensors.prelu2[1] = f64::NAN;
        let err = g.check_finite().unwrap_err().to_string();
        assert!(err.contains("prelu2.slope"), "{err}");
    }
}
