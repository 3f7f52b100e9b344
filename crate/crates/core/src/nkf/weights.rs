use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::NkfConfig;
use crate::error::{AecError, Result};
use crate::scalar::{cast_complex, czero, Real};

/// Complex affine map `y = W x + b`, `W` row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeights<T> {
    pub w: Vec<Complex<T>>,
    pub b: Vec<Complex<T>>,
    pub inputs: usize,
    pub outputs: usize,
}

/// Complex GRU. Gate blocks are stacked in the order reset, update,
/// candidate: `w_ih` is `3H x inputs`, `w_hh` is `3H x H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights<T> {
    pub w_ih: Vec<Complex<T>>,
    pub w_hh: Vec<Complex<T>>,
    pub b_ih: Vec<Complex<T>>,
    pub b_hh: Vec<Complex<T>>,
    pub inputs: usize,
    pub hidden: usize,
}

/// All trainable parameters of the gain network. One instance serves every
/// frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub fc1: DenseWeights<T>,
    pub prelu1: Vec<T>,
    pub gru1: GruWeights<T>,
    pub gru2: GruWeights<T>,
    pub fc2: DenseWeights<T>,
    pub prelu2: Vec<T>,
    pub fc3: DenseWeights<T>,
}

/// Borrowed view of one named tensor.
pub enum TensorRef<'a, T> {
    Complex(&'a [Complex<T>]),
    Real(&'a [T]),
}

pub enum TensorMut<'a, T> {
    Complex(&'a mut [Complex<T>]),
    Real(&'a mut [T]),
}

impl<T> TensorRef<'_, T> {
    /// Real-valued parameters held by the tensor.
    pub fn real_len(&self) -> usize {
        match self {
            TensorRef::Complex(c) => 2 * c.len(),
            TensorRef::Real(r) => r.len(),
        }
    }
}

/// Name, shape and kind of one tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub dims: Vec<usize>,
    pub complex: bool,
}

impl<T: Real> DenseWeights<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseWeights {
            w: vec![czero(); inputs * outputs],
            b: vec![czero(); outputs],
            inputs,
            outputs,
        }
    }
}

impl<T: Real> GruWeights<T> {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        GruWeights {
            w_ih: vec![czero(); 3 * hidden * inputs],
            w_hh: vec![czero(); 3 * hidden * hidden],
            b_ih: vec![czero(); 3 * hidden],
            b_hh: vec![czero(); 3 * hidden],
            inputs,
            hidden,
        }
    }
}

fn glorot<T: Real>(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<Complex<T>> {
    // each part ~ N(0, 1 / (2 * fan_avg)), drawn in single precision so the
    // initial weights survive a round trip through a weight file
    let std = (1.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..n)
        .map(|_| {
            let re = dist.sample(rng) as f32;
            let im = dist.sample(rng) as f32;
            Complex::new(T::of(re as f64), T::of(im as f64))
        })
        .collect()
}

impl<T: Real> ModelWeights<T> {
    /// All-zero weights (and zero PReLU slopes) for `config`'s layer sizes.
    pub fn zeros(config: &NkfConfig) -> Self {
        let d = config.feature_dim();
        let [f1, f2, f3] = config.fc_units();
        let h = config.gru_units();
        ModelWeights {
            fc1: DenseWeights::zeros(d, f1),
            prelu1: vec![T::zero(); f1],
            gru1: GruWeights::zeros(f1, h),
            gru2: GruWeights::zeros(h, h),
            fc2: DenseWeights::zeros(h, f2),
            prelu2: vec![T::zero(); f2],
            fc3: DenseWeights::zeros(f2, f3),
        }
    }

    /// Complex Glorot-style random weights, zero biases, PReLU slopes 0.25.
    pub fn init(config: &NkfConfig, seed: u64) -> Self {
        let mut w = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for dense in [&mut w.fc1, &mut w.fc2, &mut w.fc3] {
            dense.w = glorot(&mut rng, dense.w.len(), dense.inputs, dense.outputs);
        }
        for gru in [&mut w.gru1, &mut w.gru2] {
            gru.w_ih = glorot(&mut rng, gru.w_ih.len(), gru.inputs, gru.hidden);
            gru.w_hh = glorot(&mut rng, gru.w_hh.len(), gru.hidden, gru.hidden);
        }
        w.prelu1.iter_mut().for_each(|s| *s = T::of(0.25));
        w.prelu2.iter_mut().for_each(|s| *s = T::of(0.25));
        w
    }

    /// [`init`](Self::init) with the output layer weights multiplied by
    /// `output_scale`. A small scale keeps the initial gain near zero, so an
    /// untrained canceller leaves the microphone signal almost untouched
    /// instead of diverging on loud bins.
    pub fn init_scaled(config: &NkfConfig, seed: u64, output_scale: f64) -> Self {
        let mut w = Self::init(config, seed);
        let s = T::of(output_scale);
        for v in w.fc3.w.iter_mut() {
            let re = (v.re * s).to_f64_lossless() as f32;
            let im = (v.im * s).to_f64_lossless() as f32;
            *v = Complex::new(T::of(re as f64), T::of(im as f64));
        }
        w
    }

    pub fn taps(&self) -> usize {
        self.fc3.outputs
    }

    pub fn hidden(&self) -> usize {
        self.gru1.hidden
    }

    pub fn feature_dim(&self) -> usize {
        self.fc1.inputs
    }

    /// Tensor names and shapes in canonical order.
    pub fn layout(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        self.visit(|info, _| out.push(info));
        out
    }

    /// Calls `f` on every tensor in canonical order.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(TensorInfo, TensorRef<'a, T>)) {
        let info = |name: &str, dims: Vec<usize>, complex: bool| TensorInfo {
            name: name.to_owned(),
            dims,
            complex,
        };
        let dense = |f: &mut dyn FnMut(TensorInfo, TensorRef<'a, T>), p: &str, d: &'a DenseWeights<T>| {
            f(info(&format!("{p}.weight"), vec![d.outputs, d.inputs], true), TensorRef::Complex(&d.w));
            f(info(&format!("{p}.bias"), vec![d.outputs], true), TensorRef::Complex(&d.b));
        };
        let gru = |f: &mut dyn FnMut(TensorInfo, TensorRef<'a, T>), p: &str, g: &'a GruWeights<T>| {
            let h3 = 3 * g.hidden;
            f(info(&format!("{p}.weight_ih"), vec![h3, g.inputs], true), TensorRef::Complex(&g.w_ih));
            f(info(&format!("{p}.weight_hh"), vec![h3, g.hidden], true), TensorRef::Complex(&g.w_hh));
            f(info(&format!("{p}.bias_ih"), vec![h3], true), TensorRef::Complex(&g.b_ih));
            f(info(&format!("{p}.bias_hh"), vec![h3], true), TensorRef::Complex(&g.b_hh));
        };
        dense(&mut f, "fc1", &self.fc1);
        f(info("prelu1.slope", vec![self.prelu1.len()], false), TensorRef::Real(&self.prelu1));
        gru(&mut f, "gru1", &self.gru1);
        gru(&mut f, "gru2", &self.gru2);
        dense(&mut f, "fc2", &self.fc2);
        f(info("prelu2.slope", vec![self.prelu2.len()], false), TensorRef::Real(&self.prelu2));
        dense(&mut f, "fc3", &self.fc3);
    }

    /// Mutable counterpart of [`visit`](Self::visit), same order.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, TensorMut<'_, T>)) {
        f("fc1.weight", TensorMut::Complex(&mut self.fc1.w));
        f("fc1.bias", TensorMut::Complex(&mut self.fc1.b));
        f("prelu1.slope", TensorMut::Real(&mut self.prelu1));
        for (p, g) in [("gru1", &mut self.gru1), ("gru2", &mut self.gru2)] {
            f(&format!("{p}.weight_ih"), TensorMut::Complex(&mut g.w_ih));
            f(&format!("{p}.weight_hh"), TensorMut::Complex(&mut g.w_hh));
            f(&format!("{p}.bias_ih"), TensorMut::Complex(&mut g.b_ih));
            f(&format!("{p}.bias_hh"), TensorMut::Complex(&mut g.b_hh));
        }
        f("fc2.weight", TensorMut::Complex(&mut self.fc2.w));
        f("fc2.bias", TensorMut::Complex(&mut self.fc2.b));
        f("prelu2.slope", TensorMut::Real(&mut self.prelu2));
        f("fc3.weight", TensorMut::Complex(&mut self.fc3.w));
        f("fc3.bias", TensorMut::Complex(&mut self.fc3.b));
    }

    /// Number of real-valued parameters (two per complex entry, one per slope).
    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.real_len());
        n
    }

    /// Real components in canonical order, complex entries as `(re, im)`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.visit(|_, t| match t {
            TensorRef::Complex(c) => c.iter().for_each(|v| {
                out.push(v.re);
                out.push(v.im);
            }),
            TensorRef::Real(r) => out.extend_from_slice(r),
        });
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(AecError::shape(format!(
                "flat parameter vector has {} entries, model has {}",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut it = flat.iter().copied();
        self.visit_mut(|_, t| match t {
            TensorMut::Complex(c) => c.iter_mut().for_each(|v| {
                v.re = it.next().unwrap();
                v.im = it.next().unwrap();
            }),
            TensorMut::Real(r) => r.iter_mut().for_each(|v| *v = it.next().unwrap()),
        });
        Ok(())
    }

    /// Name of the tensor holding flat index `index`.
    pub fn tensor_of_flat_index(&self, index: usize) -> Option<String> {
        let mut offset = 0;
        let mut found = None;
        self.visit(|info, t| {
            let n = t.real_len();
            if found.is_none() && index < offset + n {
                found = Some(info.name.clone());
            }
            offset += n;
        });
        found
    }

    pub fn all_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> ModelWeights<U> {
        let dense = |d: &DenseWeights<T>| DenseWeights {
            w: d.w.iter().map(|&c| cast_complex(c)).collect(),
            b: d.b.iter().map(|&c| cast_complex(c)).collect(),
            inputs: d.inputs,
            outputs: d.outputs,
        };
        let gru = |g: &GruWeights<T>| GruWeights {
            w_ih: g.w_ih.iter().map(|&c| cast_complex(c)).collect(),
            w_hh: g.w_hh.iter().map(|&c| cast_complex(c)).collect(),
            b_ih: g.b_ih.iter().map(|&c| cast_complex(c)).collect(),
            b_hh: g.b_hh.iter().map(|&c| cast_complex(c)).collect(),
            inputs: g.inputs,
            hidden: g.hidden,
        };
        let real = |v: &[T]| v.iter().map(|x| U::of(x.to_f64_lossless())).collect();
        ModelWeights {
            fc1: dense(&self.fc1),
            prelu1: real(&self.prelu1),
            gru1: gru(&self.gru1),
            gru2: gru(&self.gru2),
            fc2: dense(&self.fc2),
            prelu2: real(&self.prelu2),
            fc3: dense(&self.fc3),
        }
    }

    /// Checks that every tensor has the shape `config` implies.
    pub fn check_shapes(&self, config: &NkfConfig) -> Result<()> {
        let want = ModelWeights::<T>::zeros(config).layout();
        let got = self.layout();
        if want != got {
            return Err(AecError::shape(format!(
                "weights do not match a {}-tap model",
                config.taps
            )));
        }
        let sizes_ok = {
            let mut ok = true;
            self.visit(|info, t| {
                let n: usize = info.dims.iter().product();
                let len = match t {
                    TensorRef::Complex(c) => c.len(),
                    TensorRef::Real(r) => r.len(),
                };
                ok &= n == len;
            });
            ok
        };
        if !sizes_ok {
            return Err(AecError::shape("tensor storage does not match its declared shape"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_for_four_taps() {
        let w = ModelWeights::<f64>::zeros(&NkfConfig::default());
        // fc1 18x9 + 18, gru 2 x (54x18 + 54x18 + 54 + 54), fc2 18x18 + 18,
        // fc3 4x18 + 4 complex entries; 2 x 18 PReLU slopes
        let complex = 18 * 9 + 18 + 2 * (54 * 18 * 2 + 108) + 18 * 18 + 18 + 4 * 18 + 4;
        assert_eq!(w.parameter_count(), 2 * complex + 36);
        assert_eq!(w.parameter_count(), 9440);
    }

    #[test]
    fn flat_round_trip_and_index_lookup() {
        let cfg = NkfConfig::with_taps(2);
        let w = ModelWeights::<f64>::init(&cfg, 3);
        let flat = w.to_flat();
        let mut z = ModelWeights::<f64>::zeros(&cfg);
        z.set_flat(&flat).unwrap();
        assert_eq!(z, w);
        assert_eq!(w.tensor_of_flat_index(0).unwrap(), "fc1.weight");
        assert_eq!(w.tensor_of_flat_index(flat.len() - 1).unwrap(), "fc3.bias");
        assert!(w.tensor_of_flat_index(flat.len()).is_none());
        assert!(z.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn init_is_seeded_and_scaled() {
        let cfg = NkfConfig::default();
        let a = ModelWeights::<f64>::init(&cfg, 1);
        assert_eq!(a, ModelWeights::init(&cfg, 1));
        assert_ne!(a, ModelWeights::init(&cfg, 2));
        let var: f64 = a.gru1.w_hh.iter().map(|c| c.re * c.re).sum::<f64>() / a.gru1.w_hh.len() as f64;
        assert!((var - 1.0 / 36.0).abs() < 0.2 / 36.0, "{var}");
        assert!(a.fc1.b.iter().all(|c| c.norm() == 0.0));
        a.check_shapes(&cfg).unwrap();
        assert!(a.check_shapes(&NkfConfig::with_taps(3)).is_err());
    }
}
