//! Single-vector complex layers. These are the reference definitions; the
//! batched kernels in `kernels` compute the same thing for many bins at once.

use num_complex::Complex;

use super::weights::GruWeights;
use crate::error::{AecError, Result};
use crate::scalar::{czero, Real};

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Logistic sigmoid applied to the real and imaginary parts separately.
#[inline]
pub fn split_sigmoid<T: Real>(c: Complex<T>) -> Complex<T> {
    Complex::new(sigmoid(c.re), sigmoid(c.im))
}

#[inline]
pub fn split_tanh<T: Real>(c: Complex<T>) -> Complex<T> {
    Complex::new(c.re.tanh(), c.im.tanh())
}

/// `y = W x + b`, with `W` row-major `b.len() x x.len()`.
pub fn complex_linear<T: Real>(x: &[Complex<T>], w: &[Complex<T>], b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let (n_in, n_out) = (x.len(), b.len());
    if w.len() != n_in * n_out {
        return Err(AecError::shape(format!(
            "weight has {} entries, expected {n_out}x{n_in}",
            w.len()
        )));
    }
    Ok((0..n_out)
        .map(|j| {
            let row = &w[j * n_in..(j + 1) * n_in];
            row.iter().zip(x).fold(b[j], |acc, (&wij, &xi)| acc + wij * xi)
        })
        .collect())
}

/// PReLU on each part with one real slope per channel.
pub fn complex_prelu<T: Real>(x: &[Complex<T>], slope: &[T]) -> Result<Vec<Complex<T>>> {
    if x.len() != slope.len() {
        return Err(AecError::shape(format!(
            "{} channels, {} slopes",
            x.len(),
            slope.len()
        )));
    }
    let p = |v: T, a: T| if v >= T::zero() { v } else { a * v };
    Ok(x.iter()
        .zip(slope)
        .map(|(c, &a)| Complex::new(p(c.re, a), p(c.im, a)))
        .collect())
}

/// One step of the complex GRU:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// u  = σ(W_iu x + b_iu + W_hu h + b_hu)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 - u) ⊙ n + u ⊙ h
/// ```
///
/// with σ and tanh acting on each part and ⊙ the complex product.
pub fn complex_gru_cell<T: Real>(x: &[Complex<T>], h_prev: &[Complex<T>], w: &GruWeights<T>) -> Result<Vec<Complex<T>>> {
    if x.len() != w.inputs || h_prev.len() != w.hidden {
        return Err(AecError::shape(format!(
            "GRU expects input {} and hidden {}, got {} and {}",
            w.inputs,
            w.hidden,
            x.len(),
            h_prev.len()
        )));
    }
    let h = w.hidden;
    let gi = complex_linear(x, &w.w_ih, &w.b_ih)?;
    let gh = complex_linear(h_prev, &w.w_hh, &w.b_hh)?;
    let one = Complex::new(T::one(), T::zero());
    Ok((0..h)
        .map(|j| {
            let r = split_sigmoid(gi[j] + gh[j]);
            let u = split_sigmoid(gi[h + j] + gh[h + j]);
            let n = split_tanh(gi[2 * h + j] + r * gh[2 * h + j]);
            (one - u) * n + u * h_prev[j]
        })
        .collect())
}

pub(crate) fn zeros<T: Real>(n: usize) -> Vec<Complex<T>> {
    vec![czero(); n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C> {
        (0..n)
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn linear_identity_and_imaginary_unit() {
        let x = vec![C::new(1.0, 2.0), C::new(-3.0, 0.5)];
        let eye = vec![C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
        assert_eq!(complex_linear(&x, &eye, &zeros(2)).unwrap(), x);
        let ieye: Vec<C> = eye.iter().map(|v| v * C::i()).collect();
        let xr = vec![C::new(2.0, 0.0), C::new(-1.5, 0.0)];
        let y = complex_linear(&xr, &ieye, &zeros(2)).unwrap();
        assert_eq!(y, vec![C::new(0.0, 2.0), C::new(0.0, -1.5)]);
        assert!(complex_linear(&x, &eye[..3], &zeros(2)).is_err());
    }

    #[test]
    fn linear_matches_four_real_matmuls() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, x, b) = (rand_vec(&mut rng, 6), rand_vec(&mut rng, 2), rand_vec(&mut rng, 3));
        let y = complex_linear(&x, &w, &b).unwrap();
        for j in 0..3 {
            let mut re = b[j].re;
            let mut im = b[j].im;
            for i in 0..2 {
                let (wr, wi, xr, xi) = (w[j * 2 + i].re, w[j * 2 + i].im, x[i].re, x[i].im);
                re += wr * xr - wi * xi;
                im += wr * xi + wi * xr;
            }
            assert!((y[j].re - re).abs() < 1e-14 && (y[j].im - im).abs() < 1e-14);
        }
    }

    #[test]
    fn prelu_examples() {
        let pos = vec![C::new(1.0, 2.0), C::new(0.5, 0.0)];
        assert_eq!(complex_prelu(&pos, &[0.25, 0.25]).unwrap(), pos);
        let neg = complex_prelu(&[C::new(-1.0, -1.0)], &[0.25]).unwrap();
        assert_eq!(neg, vec![C::new(-0.25, -0.25)]);
        assert!(complex_prelu(&pos, &[0.25]).is_err());
    }

    proptest! {
        #[test]
        fn prelu_matches_per_part_oracle(
            parts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -1.0f64..1.0), 1..20)
        ) {
            let x: Vec<C> = parts.iter().map(|p| C::new(p.0, p.1)).collect();
            let s: Vec<f64> = parts.iter().map(|p| p.2).collect();
            let y = complex_prelu(&x, &s).unwrap();
            for ((c, a), out) in x.iter().zip(&s).zip(&y) {
                let f = |p: f64| p.max(0.0) + a * p.min(0.0);
                prop_assert_eq!(out.re, f(c.re));
                prop_assert_eq!(out.im, f(c.im));
            }
        }
    }

    #[test]
    fn gru_with_zero_weights_halves_through_update_gate() {
        let w = GruWeights::<f64>::zeros(3, 2);
        let h = vec![C::new(0.8, -0.4), C::new(-1.0, 2.0)];
        let out = complex_gru_cell(&[C::new(1.0, 1.0); 3], &h, &w).unwrap();
        let u = C::new(0.5, 0.5);
        let n = C::new(0.0f64.tanh(), 0.0f64.tanh());
        for j in 0..2 {
            let want = (C::new(1.0, 0.0) - u) * n + u * h[j];
            assert!((out[j] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn saturated_update_gate_carries_state() {
        let mut w = GruWeights::<f64>::zeros(2, 2);
        for j in 2..4 {
            w.b_ih[j] = C::new(60.0, -60.0); // σ parts → (1, 0): u = 1 + 0i
        }
        let h = vec![C::new(0.3, 0.1), C::new(-0.7, 0.2)];
        let out = complex_gru_cell(&zeros(2), &h, &w).unwrap();
        for j in 0..2 {
            assert!((out[j] - h[j]).norm() < 1e-20);
        }
    }

    #[test]
    fn gru_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n_in, h) = (3, 2);
        let w = GruWeights {
            w_ih: rand_vec(&mut rng, 3 * h * n_in),
            w_hh: rand_vec(&mut rng, 3 * h * h),
            b_ih: rand_vec(&mut rng, 3 * h),
            b_hh: rand_vec(&mut rng, 3 * h),
            inputs: n_in,
            hidden: h,
        };
        let x = rand_vec(&mut rng, n_in);
        let hp = rand_vec(&mut rng, h);
        let out = complex_gru_cell(&x, &hp, &w).unwrap();

        // fully real arithmetic
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let aff = |row: usize, m: &[C], v: &[C], b: &[C]| {
            let (mut re, mut im) = (b[row].re, b[row].im);
            for i in 0..v.len() {
                let c = m[row * v.len() + i];
                re += c.re * v[i].re - c.im * v[i].im;
                im += c.re * v[i].im + c.im * v[i].re;
            }
            (re, im)
        };
        for j in 0..h {
            let (ir, ii) = aff(j, &w.w_ih, &x, &w.b_ih);
            let (hr, hi) = aff(j, &w.w_hh, &hp, &w.b_hh);
            let (rr, ri) = (sig(ir + hr), sig(ii + hi));
            let (ir, ii) = aff(h + j, &w.w_ih, &x, &w.b_ih);
            let (hr, hi) = aff(h + j, &w.w_hh, &hp, &w.b_hh);
            let (ur, ui) = (sig(ir + hr), sig(ii + hi));
            let (ir, ii) = aff(2 * h + j, &w.w_ih, &x, &w.b_ih);
            let (hr, hi) = aff(2 * h + j, &w.w_hh, &hp, &w.b_hh);
            let (nr, ni) = ((ir + rr * hr - ri * hi).tanh(), (ii + rr * hi + ri * hr).tanh());
            let re = (1.0 - ur) * nr + ui * ni + ur * hp[j].re - ui * hp[j].im;
            let im = (1.0 - ur) * ni - ui * nr + ur * hp[j].im + ui * hp[j].re;
            assert!((out[j].re - re).abs() < 1e-12 && (out[j].im - im).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_shape_errors() {
        let w = GruWeights::<f64>::zeros(3, 2);
        assert!(complex_gru_cell(&zeros(2), &zeros(2), &w).is_err());
        assert!(complex_gru_cell(&zeros(3), &zeros(3), &w).is_err());
    }
}
