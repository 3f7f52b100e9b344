//! Algorithm-1 frame step over a batch of bins.

use super::kernels::{dense_fwd, gru_fwd, prelu_fwd, GruCache, GruScratch, Planes};
use super::weights::ModelWeights;
use super::LevelNorm;
use crate::scalar::Real;

/// Recurrent state for a batch of bins.
#[derive(Debug, Clone)]
pub(crate) struct BatchState<T> {
    pub h_hat: Planes<T>,
    pub delta: Planes<T>,
    pub g1: Planes<T>,
    pub g2: Planes<T>,
    /// Tracked far-end power per bin.
    pub x_pow: Vec<T>,
}

impl<T: Real> BatchState<T> {
    pub fn zeros(taps: usize, hidden: usize, batch: usize) -> Self {
        BatchState {
            h_hat: Planes::zeros(taps, batch),
            delta: Planes::zeros(taps, batch),
            g1: Planes::zeros(hidden, batch),
            g2: Planes::zeros(hidden, batch),
            x_pow: vec![T::zero(); batch],
        }
    }
}

/// Everything the backward pass needs from one frame.
#[derive(Debug, Clone)]
pub(crate) struct FrameTrace<T> {
    pub x: Planes<T>,
    pub e: Planes<T>,
    pub z: Planes<T>,
    pub a1: Planes<T>,
    pub u1: Planes<T>,
    pub g1_prev: Planes<T>,
    pub gru1: GruCache<T>,
    pub g1: Planes<T>,
    pub g2_prev: Planes<T>,
    pub gru2: GruCache<T>,
    pub g2: Planes<T>,
    pub a2: Planes<T>,
    pub u2: Planes<T>,
    /// Gain actually applied, after level scaling.
    pub k: Planes<T>,
    /// `1/σ` per bin.
    pub inv_level: Vec<T>,
    pub d_hat: Planes<T>,
}

pub(crate) struct Engine<T> {
    taps: usize,
    norm: Option<LevelNorm>,
    inv_level: Vec<T>,
    z: Planes<T>,
    a1: Planes<T>,
    u1: Planes<T>,
    g1: Planes<T>,
    g2: Planes<T>,
    a2: Planes<T>,
    u2: Planes<T>,
    k: Planes<T>,
    e: Planes<T>,
    scratch: GruScratch<T>,
    cache1: GruCache<T>,
    cache2: GruCache<T>,
}

impl<T: Real> Engine<T> {
    pub fn new(weights: &ModelWeights<T>, norm: Option<LevelNorm>, batch: usize) -> Self {
        let taps = weights.taps();
        let hd = weights.hidden();
        Engine {
            taps,
            norm,
            inv_level: vec![T::one(); batch],
            z: Planes::zeros(weights.feature_dim(), batch),
            a1: Planes::zeros(weights.fc1.outputs, batch),
            u1: Planes::zeros(weights.fc1.outputs, batch),
            g1: Planes::zeros(hd, batch),
            g2: Planes::zeros(hd, batch),
            a2: Planes::zeros(weights.fc2.outputs, batch),
            u2: Planes::zeros(weights.fc2.outputs, batch),
            k: Planes::zeros(taps, batch),
            e: Planes::zeros(1, batch),
            scratch: GruScratch::new(hd, batch),
            cache1: GruCache::zeros(hd, batch),
            cache2: GruCache::zeros(hd, batch),
        }
    }

    /// Advances `state` by one frame. `x` holds the CTF stack (`L` rows),
    /// `y` the microphone bin values (one row). Writes the echo estimate
    /// `d_hat` and returns nothing else; `Ŝ = Y - d_hat`.
    pub fn step(
        &mut self,
        w: &ModelWeights<T>,
        state: &mut BatchState<T>,
        x: &Planes<T>,
        y: &Planes<T>,
        d_hat: &mut Planes<T>,
        trace: Option<&mut Vec<FrameTrace<T>>>,
    ) {
        let taps = self.taps;
        let bsz = x.batch;

        // e = Y - h^H x
        self.e.re.copy_from_slice(&y.re);
        self.e.im.copy_from_slice(&y.im);
        conj_dot_sub(&state.h_hat, x, &mut self.e);

        if let Some(norm) = self.norm {
            let a = T::of(norm.forgetting);
            let floor = T::of(norm.floor);
            let inv_taps = T::one() / T::of(taps as f64);
            for b in 0..bsz {
                let mut inst = T::zero();
                for l in 0..taps {
                    let i = l * bsz + b;
                    inst += x.re[i] * x.re[i] + x.im[i] * x.im[i];
                }
                inst = inst * inv_taps + y.re[b] * y.re[b] + y.im[b] * y.im[b];
                let p = &mut state.x_pow[b];
                *p = if *p == T::zero() { inst } else { a * *p + (T::one() - a) * inst };
                self.inv_level[b] = T::one() / (*p + floor).sqrt();
            }
        }

        // z = [x/σ; delta; e/σ]
        let zb = taps * bsz;
        self.z.re[zb..2 * zb].copy_from_slice(&state.delta.re);
        self.z.im[zb..2 * zb].copy_from_slice(&state.delta.im);
        for l in 0..taps {
            for b in 0..bsz {
                let i = l * bsz + b;
                self.z.re[i] = x.re[i] * self.inv_level[b];
                self.z.im[i] = x.im[i] * self.inv_level[b];
            }
        }
        for b in 0..bsz {
            self.z.re[2 * zb + b] = self.e.re[b] * self.inv_level[b];
            self.z.im[2 * zb + b] = self.e.im[b] * self.inv_level[b];
        }

        let tracing = trace.is_some();
        dense_fwd(&w.fc1, &self.z, &mut self.a1);
        prelu_fwd(&w.prelu1, &self.a1, &mut self.u1);
        gru_fwd(&w.gru1, &self.u1, &state.g1, &mut self.g1, &mut self.scratch, tracing.then_some(&mut self.cache1));
        gru_fwd(&w.gru2, &self.g1, &state.g2, &mut self.g2, &mut self.scratch, tracing.then_some(&mut self.cache2));
        dense_fwd(&w.fc2, &self.g2, &mut self.a2);
        prelu_fwd(&w.prelu2, &self.a2, &mut self.u2);
        dense_fwd(&w.fc3, &self.u2, &mut self.k);
        if self.norm.is_some() {
            for l in 0..taps {
                for b in 0..bsz {
                    let i = l * bsz + b;
                    self.k.re[i] *= self.inv_level[b];
                    self.k.im[i] *= self.inv_level[b];
                }
            }
        }

        // delta = k conj(e); h += delta
        let (er, ei) = (&self.e.re, &self.e.im);
        for l in 0..taps {
            let r = l * bsz..(l + 1) * bsz;
            let (kr, ki) = (&self.k.re[r.clone()], &self.k.im[r.clone()]);
            let (dr, di) = (&mut state.delta.re[r.clone()], &mut state.delta.im[r.clone()]);
            for b in 0..bsz {
                dr[b] = kr[b] * er[b] + ki[b] * ei[b];
                di[b] = ki[b] * er[b] - kr[b] * ei[b];
            }
            let (hr, hi) = (&mut state.h_hat.re[r.clone()], &mut state.h_hat.im[r]);
            for b in 0..bsz {
                hr[b] += dr[b];
                hi[b] += di[b];
            }
        }

        // d_hat = h^H x with the updated h
        d_hat.fill_zero();
        conj_dot_sub(&state.h_hat, x, d_hat);
        d_hat.re.iter_mut().for_each(|v| *v = -*v);
        d_hat.im.iter_mut().for_each(|v| *v = -*v);

        if let Some(trace) = trace {
            trace.push(FrameTrace {
                x: x.clone(),
                e: self.e.clone(),
                z: self.z.clone(),
                a1: self.a1.clone(),
                u1: self.u1.clone(),
                g1_prev: state.g1.clone(),
                gru1: self.cache1.clone(),
                g1: self.g1.clone(),
                g2_prev: state.g2.clone(),
                gru2: self.cache2.clone(),
                g2: self.g2.clone(),
                a2: self.a2.clone(),
                u2: self.u2.clone(),
                k: self.k.clone(),
                inv_level: self.inv_level.clone(),
                d_hat: d_hat.clone(),
            });
        }
        std::mem::swap(&mut state.g1, &mut self.g1);
        std::mem::swap(&mut state.g2, &mut self.g2);
    }
}

/// `out -= h^H x` per column.
fn conj_dot_sub<T: Real>(h: &Planes<T>, x: &Planes<T>, out: &mut Planes<T>) {
    for l in 0..h.rows {
        let (hr, hi) = h.row(l);
        let (xr, xi) = x.row(l);
        for b in 0..out.batch {
            // conj(h) x
            out.re[b] -= hr[b] * xr[b] + hi[b] * xi[b];
            out.im[b] -= hr[b] * xi[b] - hi[b] * xr[b];
        }
    }
}
