use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter blocks. Moments are
/// allocated on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<DenseTensor<T>>,
    pub v: Vec<DenseTensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One bias-corrected update of every block.
    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut DenseTensor<T>>,
        grads: &[DenseTensor<T>],
    ) -> Result<()> {
        let mut params: Vec<&mut DenseTensor<T>> = params.into_iter().collect();
        if params.len() != grads.len() {
            return Err(Error::InvalidInput(format!(
                "adam got {} parameter blocks and {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            g.expect_shape("adam gradient", p.shape())?;
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| DenseTensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() {
            return Err(Error::InvalidInput("adam state tracks a different parameter list".into()));
        }
        for (m, g) in self.m.iter().zip(grads) {
            m.expect_shape("adam moment", g.shape())?;
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let corr1 = T::one() / (T::one() - T::of(c.beta1.powi(self.step as i32)));
        let corr2 = T::one() / (T::one() - T::of(c.beta2.powi(self.step as i32)));
        let (lr, eps) = (T::of(c.learning_rate), T::of(c.epsilon));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((p, &g), (m, v)) in it {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m * corr1;
                let v_hat = *v * corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DenseTensor<f64> {
        DenseTensor::new(&[1], vec![v]).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(AdamConfig::default());
        let mut p = scalar(0.0);
        s.update([&mut p], &[scalar(2.0)]).unwrap();
        assert!((p.data()[0] + 1e-3).abs() < 1e-9);
        let before = p.data()[0];
        s.update([&mut p], &[scalar(2.0)]).unwrap();
        assert!(p.data()[0] < before);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = AdamState::new(AdamConfig::default());
        let mut p = scalar(0.7);
        for _ in 0..5 {
            s.update([&mut p], &[scalar(0.0)]).unwrap();
        }
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut s = AdamState::new(AdamConfig::default());
        let mut p = scalar(0.0);
        let g = DenseTensor::zeros(&[2]);
        assert!(matches!(s.update([&mut p], &[g]), Err(Error::Shape { .. })));
    }
}
