//! Batched layer kernels. Activations are stored feature-major with one
//! contiguous run of bins per feature, separately for real and imaginary
//! parts, so the inner loops run over bins and vectorize.

use num_complex::Complex;

use super::layers::sigmoid;
use super::weights::{DenseWeights, GruWeights};
use crate::scalar::Real;

/// `rows x batch` complex activations in split (re, im) storage.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Planes<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
    pub rows: usize,
    pub batch: usize,
}

impl<T: Real> Planes<T> {
    pub fn zeros(rows: usize, batch: usize) -> Self {
        Planes {
            re: vec![T::zero(); rows * batch],
            im: vec![T::zero(); rows * batch],
            rows,
            batch,
        }
    }

    pub fn fill_zero(&mut self) {
        self.re.iter_mut().for_each(|v| *v = T::zero());
        self.im.iter_mut().for_each(|v| *v = T::zero());
    }

    #[inline]
    pub fn get(&self, row: usize, b: usize) -> Complex<T> {
        let i = row * self.batch + b;
        Complex::new(self.re[i], self.im[i])
    }

    #[inline]
    pub fn set(&mut self, row: usize, b: usize, v: Complex<T>) {
        let i = row * self.batch + b;
        self.re[i] = v.re;
        self.im[i] = v.im;
    }

    pub fn row(&self, row: usize) -> (&[T], &[T]) {
        let r = row * self.batch..(row + 1) * self.batch;
        (&self.re[r.clone()], &self.im[r])
    }

    pub fn row_mut(&mut self, row: usize) -> (&mut [T], &mut [T]) {
        let r = row * self.batch..(row + 1) * self.batch;
        (&mut self.re[r.clone()], &mut self.im[r])
    }
}

/// `y = W x + b` for every column.
pub(crate) fn linear_fwd<T: Real>(w: &[Complex<T>], b: &[Complex<T>], x: &Planes<T>, y: &mut Planes<T>) {
    let n_in = x.rows;
    debug_assert_eq!(w.len(), n_in * y.rows);
    for j in 0..y.rows {
        let (yr, yi) = y.row_mut(j);
        yr.iter_mut().for_each(|v| *v = b[j].re);
        yi.iter_mut().for_each(|v| *v = b[j].im);
        for i in 0..n_in {
            let Complex { re: wr, im: wi } = w[j * n_in + i];
            let (xr, xi) = x.row(i);
            for (((yr, yi), &xr), &xi) in yr.iter_mut().zip(yi.iter_mut()).zip(xr).zip(xi) {
                *yr += wr * xr - wi * xi;
                *yi += wr * xi + wi * xr;
            }
        }
    }
}

/// Backward of [`linear_fwd`]. Accumulates into `gw`, `gb`, and, if
/// given, `gx` (`W^H gy`).
pub(crate) fn linear_bwd<T: Real>(
    w: &[Complex<T>],
    x: &Planes<T>,
    gy: &Planes<T>,
    gx: Option<&mut Planes<T>>,
    gw: &mut [Complex<T>],
    gb: &mut [Complex<T>],
) {
    let n_in = x.rows;
    for j in 0..gy.rows {
        let (gr, gi) = gy.row(j);
        gb[j] += Complex::new(gr.iter().copied().sum(), gi.iter().copied().sum());
        for i in 0..n_in {
            let (xr, xi) = x.row(i);
            // gy * conj(x)
            let (mut re, mut im) = (T::zero(), T::zero());
            for (((&gr, &gi), &xr), &xi) in gr.iter().zip(gi).zip(xr).zip(xi) {
                re += gr * xr + gi * xi;
                im += gi * xr - gr * xi;
            }
            gw[j * n_in + i] += Complex::new(re, im);
        }
    }
    if let Some(gx) = gx {
        for i in 0..n_in {
            let (xr, xi) = gx.row_mut(i);
            for j in 0..gy.rows {
                // conj(w) * gy
                let Complex { re: wr, im: wi } = w[j * n_in + i];
                let (gr, gi) = gy.row(j);
                for (((xr, xi), &gr), &gi) in xr.iter_mut().zip(xi.iter_mut()).zip(gr).zip(gi) {
                    *xr += wr * gr + wi * gi;
                    *xi += wr * gi - wi * gr;
                }
            }
        }
    }
}

pub(crate) fn dense_fwd<T: Real>(d: &DenseWeights<T>, x: &Planes<T>, y: &mut Planes<T>) {
    linear_fwd(&d.w, &d.b, x, y)
}

pub(crate) fn prelu_fwd<T: Real>(slope: &[T], x: &Planes<T>, y: &mut Planes<T>) {
    for (j, &a) in slope.iter().enumerate() {
        let r = j * x.batch..(j + 1) * x.batch;
        for (o, &v) in y.re[r.clone()].iter_mut().zip(&x.re[r.clone()]) {
            *o = if v >= T::zero() { v } else { a * v };
        }
        for (o, &v) in y.im[r.clone()].iter_mut().zip(&x.im[r]) {
            *o = if v >= T::zero() { v } else { a * v };
        }
    }
}

/// Backward of [`prelu_fwd`]; `x` is the pre-activation input. Overwrites
/// `gx` and accumulates slope gradients.
pub(crate) fn prelu_bwd<T: Real>(slope: &[T], x: &Planes<T>, gy: &Planes<T>, gx: &mut Planes<T>, gslope: &mut [T]) {
    for (j, &a) in slope.iter().enumerate() {
        let r = j * x.batch..(j + 1) * x.batch;
        let mut gs = T::zero();
        for (parts_x, parts_g, parts_o) in [
            (&x.re[r.clone()], &gy.re[r.clone()], &mut gx.re[r.clone()]),
            (&x.im[r.clone()], &gy.im[r.clone()], &mut gx.im[r.clone()]),
        ] {
            for ((&v, &g), o) in parts_x.iter().zip(parts_g).zip(parts_o.iter_mut()) {
                if v >= T::zero() {
                    *o = g;
                } else {
                    *o = a * g;
                    gs += g * v;
                }
            }
        }
        gslope[j] += gs;
    }
}

/// Per-frame GRU intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GruCache<T> {
    pub r: Planes<T>,
    pub u: Planes<T>,
    pub n: Planes<T>,
    /// Recurrent candidate pre-activation `W_hn h + b_hn`.
    pub hn: Planes<T>,
}

/// Scratch buffers for the GRU input and recurrent projections.
pub(crate) struct GruScratch<T> {
    gi: Planes<T>,
    gh: Planes<T>,
}

impl<T: Real> GruScratch<T> {
    pub fn new(hidden: usize, batch: usize) -> Self {
        GruScratch {
            gi: Planes::zeros(3 * hidden, batch),
            gh: Planes::zeros(3 * hidden, batch),
        }
    }
}

pub(crate) fn gru_fwd<T: Real>(
    w: &GruWeights<T>,
    x: &Planes<T>,
    h: &Planes<T>,
    out: &mut Planes<T>,
    scratch: &mut GruScratch<T>,
    cache: Option<&mut GruCache<T>>,
) {
    let hd = w.hidden;
    let bsz = x.batch;
    linear_fwd(&w.w_ih, &w.b_ih, x, &mut scratch.gi);
    linear_fwd(&w.w_hh, &w.b_hh, h, &mut scratch.gh);
    let (gi, gh) = (&scratch.gi, &scratch.gh);
    let one = T::one();
    let mut cache = cache;
    for j in 0..hd {
        let rr = j * bsz;
        let ur = (hd + j) * bsz;
        let nr = (2 * hd + j) * bsz;
        for b in 0..bsz {
            let r_re = sigmoid(gi.re[rr + b] + gh.re[rr + b]);
            let r_im = sigmoid(gi.im[rr + b] + gh.im[rr + b]);
            let u_re = sigmoid(gi.re[ur + b] + gh.re[ur + b]);
            let u_im = sigmoid(gi.im[ur + b] + gh.im[ur + b]);
            let (hn_re, hn_im) = (gh.re[nr + b], gh.im[nr + b]);
            let n_re = (gi.re[nr + b] + r_re * hn_re - r_im * hn_im).tanh();
            let n_im = (gi.im[nr + b] + r_re * hn_im + r_im * hn_re).tanh();
            let i = j * bsz + b;
            let (hp_re, hp_im) = (h.re[i], h.im[i]);
            out.re[i] = (one - u_re) * n_re + u_im * n_im + u_re * hp_re - u_im * hp_im;
            out.im[i] = (one - u_re) * n_im - u_im * n_re + u_re * hp_im + u_im * hp_re;
            if let Some(c) = cache.as_deref_mut() {
                c.r.re[i] = r_re;
                c.r.im[i] = r_im;
                c.u.re[i] = u_re;
                c.u.im[i] = u_im;
                c.n.re[i] = n_re;
                c.n.im[i] = n_im;
                c.hn.re[i] = hn_re;
                c.hn.im[i] = hn_im;
            }
        }
    }
}

impl<T: Real> GruCache<T> {
    pub fn zeros(hidden: usize, batch: usize) -> Self {
        GruCache {
            r: Planes::zeros(hidden, batch),
            u: Planes::zeros(hidden, batch),
            n: Planes::zeros(hidden, batch),
            hn: Planes::zeros(hidden, batch),
        }
    }
}

/// Backward of [`gru_fwd`]. `g_out` is the gradient w.r.t. the new hidden
/// state. Accumulates into `gx`, `gh_prev`, and the weight gradients.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gru_bwd<T: Real>(
    w: &GruWeights<T>,
    x: &Planes<T>,
    h_prev: &Planes<T>,
    cache: &GruCache<T>,
    g_out: &Planes<T>,
    gx: &mut Planes<T>,
    gh_prev: &mut Planes<T>,
    grads: &mut GruWeights<T>,
    scratch: &mut GruScratch<T>,
) {
    let hd = w.hidden;
    let bsz = x.batch;
    let one = T::one();
    let (ga_i, ga_h) = (&mut scratch.gi, &mut scratch.gh);
    for j in 0..hd {
        for b in 0..bsz {
            let i = j * bsz + b;
            let g = g_out.get(j, b);
            let r = cache.r.get(j, b);
            let u = cache.u.get(j, b);
            let n = cache.n.get(j, b);
            let hn = cache.hn.get(j, b);
            let hp = h_prev.get(j, b);
            // h' = (1 - u) n + u h
            let gn = g * (Complex::new(one, T::zero()) - u).conj();
            let gu = g * (hp - n).conj();
            gh_prev.re[i] += (g * u.conj()).re;
            gh_prev.im[i] += (g * u.conj()).im;
            // n = tanh(a_n), a_n = gi_n + r hn
            let gan = Complex::new(gn.re * (one - n.re * n.re), gn.im * (one - n.im * n.im));
            let gr = gan * hn.conj();
            let ghn = gan * r.conj();
            let gar = Complex::new(gr.re * r.re * (one - r.re), gr.im * r.im * (one - r.im));
            let gau = Complex::new(gu.re * u.re * (one - u.re), gu.im * u.im * (one - u.im));
            ga_i.set(j, b, gar);
            ga_i.set(hd + j, b, gau);
            ga_i.set(2 * hd + j, b, gan);
            ga_h.set(j, b, gar);
            ga_h.set(hd + j, b, gau);
            ga_h.set(2 * hd + j, b, ghn);
        }
    }
    linear_bwd(&w.w_ih, x, ga_i, Some(gx), &mut grads.w_ih, &mut grads.b_ih);
    linear_bwd(&w.w_hh, h_prev, ga_h, Some(gh_prev), &mut grads.w_hh, &mut grads.b_hh);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nkf::layers::{complex_gru_cell, complex_linear, complex_prelu};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C> {
        (0..n)
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn planes_from_columns(cols: &[Vec<C>]) -> Planes<f64> {
        let mut p = Planes::zeros(cols[0].len(), cols.len());
        for (b, col) in cols.iter().enumerate() {
            for (j, &v) in col.iter().enumerate() {
                p.set(j, b, v);
            }
        }
        p
    }

    #[test]
    fn batched_layers_match_vector_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let batch = 5;
        let cols: Vec<Vec<C>> = (0..batch).map(|_| rand_vec(&mut rng, 4)).collect();
        let hs: Vec<Vec<C>> = (0..batch).map(|_| rand_vec(&mut rng, 3)).collect();
        let x = planes_from_columns(&cols);
        let h = planes_from_columns(&hs);

        let w = rand_vec(&mut rng, 12);
        let bias = rand_vec(&mut rng, 3);
        let mut y = Planes::zeros(3, batch);
        linear_fwd(&w, &bias, &x, &mut y);
        let slope = vec![0.1, 0.3, -0.2, 0.25];
        let mut p = Planes::zeros(4, batch);
        prelu_fwd(&slope, &x, &mut p);
        let gru = GruWeights {
            w_ih: rand_vec(&mut rng, 36),
            w_hh: rand_vec(&mut rng, 27),
            b_ih: rand_vec(&mut rng, 9),
            b_hh: rand_vec(&mut rng, 9),
            inputs: 4,
            hidden: 3,
        };
        let mut g = Planes::zeros(3, batch);
        gru_fwd(&gru, &x, &h, &mut g, &mut GruScratch::new(3, batch), None);

        for b in 0..batch {
            let want = complex_linear(&cols[b], &w, &bias).unwrap();
            let want_p = complex_prelu(&cols[b], &slope).unwrap();
            let want_g = complex_gru_cell(&cols[b], &hs[b], &gru).unwrap();
            for j in 0..3 {
                assert!((y.get(j, b) - want[j]).norm() < 1e-14);
                assert!((g.get(j, b) - want_g[j]).norm() < 1e-14);
            }
            for j in 0..4 {
                assert_eq!(p.get(j, b), want_p[j]);
            }
        }
    }
}
