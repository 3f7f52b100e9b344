use crate::error::{AecError, Result};
use crate::nkf::{ModelWeights, TensorMut, TensorRef};

/// Gradients of the loss, one tensor per model tensor with the same shape.
/// Complex entries hold `∂L/∂re + i ∂L/∂im`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub tensors: ModelWeights<f64>,
}

impl GradientSet {
    pub fn zeros_like<T: crate::scalar::Real>(weights: &ModelWeights<T>) -> Self {
        let mut tensors = weights.cast::<f64>();
        tensors.set_flat(&vec![0.0; tensors.parameter_count()]).expect("same layout");
        GradientSet { tensors }
    }

    /// Flat real components in the order of [`ModelWeights::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors.to_flat()
    }

    pub fn global_norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors.visit_mut(|_, t| match t {
            TensorMut::Complex(c) => c.iter_mut().for_each(|v| *v *= s),
            TensorMut::Real(r) => r.iter_mut().for_each(|v| *v *= s),
        });
    }

    pub fn add(&mut self, other: &GradientSet) -> Result<()> {
        if self.tensors.layout() != other.tensors.layout() {
            return Err(AecError::shape("gradient sets have different layouts"));
        }
        let flat: Vec<f64> = self.to_flat().iter().zip(other.to_flat()).map(|(a, b)| a + b).collect();
        self.tensors.set_flat(&flat)
    }

    /// Fails with the name of the first tensor holding a non-finite entry.
    pub fn check_finite(&self) -> Result<()> {
        let mut bad = None;
        self.tensors.visit(|info, t| {
            let ok = match t {
                TensorRef::Complex(c) => c.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
                TensorRef::Real(r) => r.iter().all(|v| v.is_finite()),
            };
            if !ok && bad.is_none() {
                bad = Some(info.name);
            }
        });
        match bad {
            Some(name) => Err(AecError::Numerical(format!("non-finite gradient in {name}"))),
            None => Ok(()),
        }
    }
}
