//! A named chain of layers with an explicit activation tape.

use crate::error::{Error, Result};
use crate::nn::layer::{Cache, Layer};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone)]
struct Named<T: Scalar> {
    name: String,
    layer: Box<dyn Layer<T>>,
}

#[derive(Debug, Clone, Default)]
pub struct Sequential<T: Scalar> {
    layers: Vec<Named<T>>,
}

/// Per-layer caches from one forward pass, consumed by `backward`.
#[derive(Debug, Default)]
pub struct Tape {
    caches: Vec<Cache>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }
}

/// Parameter gradients laid out like [`Sequential::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub blocks: Vec<DenseTensor<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn scale(&mut self, factor: T) {
        for b in &mut self.blocks {
            b.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn accumulate(&mut self, other: &Grads<T>) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::InvalidInput("gradient block counts differ".into()));
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            b.expect_shape("accumulated gradient", a.shape())?;
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, &y)| *x += y);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data().iter().all(|v| v.is_finite()))
    }
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    /// Appends a layer; parameter names become `"{name}.{param}"`.
    pub fn push(&mut self, name: impl Into<String>, layer: impl Layer<T> + 'static) -> &mut Self {
        self.push_boxed(name, Box::new(layer))
    }

    pub fn push_boxed(&mut self, name: impl Into<String>, layer: Box<dyn Layer<T>>) -> &mut Self {
        self.layers.push(Named { name: name.into(), layer });
        self
    }

    /// Appends all layers of `other`, prefixing their names.
    pub fn extend(&mut self, prefix: &str, other: Sequential<T>) -> &mut Self {
        for n in other.layers {
            self.layers.push(Named {
                name: format!("{prefix}.{}", n.name),
                layer: n.layer,
            });
        }
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().map(|n| n.name.as_str())
    }

    pub fn layers(&self) -> impl Iterator<Item = &dyn Layer<T>> {
        self.layers.iter().map(|n| n.layer.as_ref())
    }

    pub fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Tape)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for n in &self.layers {
            let (y, cache) = n.layer.forward(&x)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, Tape { caches }))
    }

    /// Forward pass without keeping a tape.
    pub fn infer(&self, input: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        let mut x = input.clone();
        for n in &self.layers {
            x = n.layer.forward(&x)?.0;
        }
        Ok(x)
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads {
            blocks: self.params().map(|(_, p)| DenseTensor::zeros(p.shape())).collect(),
        }
    }

    pub fn backward(&self, tape: &Tape, grad_output: &DenseTensor<T>) -> Result<(DenseTensor<T>, Grads<T>)> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::State(format!(
                "tape holds {} caches for {} layers; run forward first",
                tape.caches.len(),
                self.layers.len()
            )));
        }
        let mut grads = self.zero_grads();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for n in &self.layers {
            offsets.push(off);
            off += n.layer.params().len();
        }
        let mut g = grad_output.clone();
        for (i, n) in self.layers.iter().enumerate().rev() {
            let np = n.layer.params().len();
            let slot = &mut grads.blocks[offsets[i]..offsets[i] + np];
            g = n.layer.backward(&tape.caches[i], &g, slot)?;
        }
        Ok((g, grads))
    }

    /// Non-differentiable choices of every layer during the taped pass.
    pub fn decisions(&self, tape: &Tape) -> Vec<u64> {
        self.layers
            .iter()
            .zip(&tape.caches)
            .map(|(n, c)| n.layer.decisions(c))
            .collect()
    }

    pub fn params(&self) -> impl Iterator<Item = (String, &DenseTensor<T>)> {
        self.layers.iter().flat_map(|n| {
            n.layer
                .params()
                .iter()
                .map(move |p| (format!("{}.{}", n.name, p.name), &p.value))
        })
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (String, &mut DenseTensor<T>)> {
        self.layers.iter_mut().flat_map(|n| {
            let prefix = n.name.clone();
            n.layer
                .params_mut()
                .iter_mut()
                .map(move |p| (format!("{prefix}.{}", p.name), &mut p.value))
        })
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|(_, p)| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{Activation, Dense};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Sequential<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut n = Sequential::new();
        n.push("fc1", Dense::new(3, 4, &mut rng))
            .push("act", Activation::Relu)
            .push("fc2", Dense::new(4, 2, &mut rng));
        n
    }

    #[test]
    fn names_and_counts() {
        let n = net();
        let names: Vec<String> = n.params().map(|(k, _)| k).collect();
        assert_eq!(names, ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]);
        assert_eq!(n.param_count(), 12 + 4 + 8 + 2);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let n = net();
        let dy = DenseTensor::zeros(&[1, 2]);
        assert!(matches!(n.backward(&Tape::default(), &dy), Err(Error::State(_))));
    }

    #[test]
    fn forward_is_pure_and_repeatable() {
        let n = net();
        let before: Vec<DenseTensor<f64>> = n.params().map(|(_, p)| p.clone()).collect();
        let x = DenseTensor::from_fn(&[2, 3], |i| i as f64 * 0.3 - 0.7);
        let (y1, tape) = n.forward(&x).unwrap();
        let _ = n.backward(&tape, &DenseTensor::filled(&[2, 2], 1.0)).unwrap();
        let y2 = n.infer(&x).unwrap();
        assert_eq!(y1, y2);
        let after: Vec<DenseTensor<f64>> = n.params().map(|(_, p)| p.clone()).collect();
        assert_eq!(before, after);
    }
}
