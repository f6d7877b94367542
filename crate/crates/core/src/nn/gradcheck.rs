//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::nn::loss::{bce_loss, clamp_mask};
use crate::nn::network::Sequential;
use crate::tensor::DenseTensor;

/// Scalar objective placed on top of the network output.
#[derive(Debug, Clone)]
pub enum CheckLoss {
    /// Mean binary cross-entropy against a fixed binary target.
    Bce(DenseTensor<f64>),
    /// `Σ wᵢ·yᵢ` with weights drawn uniformly from `[-1, 1]`.
    Projection { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Entries sampled per block; 0 checks every entry.
    pub max_entries: usize,
    pub check_input: bool,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-4,
            floor: 1e-6,
            max_entries: 0,
            check_input: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose ±step perturbation crossed a ReLU, pooling or clamp
    /// boundary, where the derivative does not exist.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_error <= self.tolerance)
    }

    pub fn failures(&self) -> Vec<&BlockCheck> {
        self.blocks.iter().filter(|b| b.max_rel_error > self.tolerance).collect()
    }
}

struct Objective {
    loss: CheckLoss,
    weights: Option<DenseTensor<f64>>,
}

impl Objective {
    fn eval(&self, y: &DenseTensor<f64>) -> Result<(f64, DenseTensor<f64>, Vec<bool>)> {
        match &self.loss {
            CheckLoss::Bce(target) => {
                let (l, g) = bce_loss(y, target)?;
                Ok((l, g, clamp_mask(y)))
            }
            CheckLoss::Projection { .. } => {
                let w = self.weights.as_ref().expect("projection weights");
                w.expect_shape("projection loss", y.shape())?;
                Ok((w.dot(y), w.clone(), Vec::new()))
            }
        }
    }
}

fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares the analytic gradients of `net` at `input` against central
/// differences, block by block.
pub fn grad_check(
    net: &Sequential<f64>,
    input: &DenseTensor<f64>,
    loss: CheckLoss,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let (y, tape) = net.forward(input)?;
    let weights = match loss {
        CheckLoss::Projection { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(DenseTensor::from_fn(y.shape(), |_| rng.gen_range(-1.0..1.0)))
        }
        CheckLoss::Bce(_) => None,
    };
    let obj = Objective { loss, weights };
    let (_, dy, base_clamp) = obj.eval(&y)?;
    let base_decisions = net.decisions(&tape);
    let (dx, grads) = net.backward(&tape, &dy)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pick = |len: usize| -> Vec<usize> {
        if cfg.max_entries == 0 || len <= cfg.max_entries {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, cfg.max_entries).into_vec();
            v.sort_unstable();
            v
        }
    };

    // Evaluates the loss with one perturbed scalar; `None` when a
    // non-differentiable decision changed.
    let probe = |net: &Sequential<f64>, x: &DenseTensor<f64>| -> Result<Option<f64>> {
        let (y, tape) = net.forward(x)?;
        let (l, _, clamp) = obj.eval(&y)?;
        Ok((net.decisions(&tape) == base_decisions && clamp == base_clamp).then_some(l))
    };
    let h = cfg.step;

    let mut blocks = Vec::new();
    let names: Vec<String> = net.params().map(|(n, _)| n).collect();
    let mut work = net.clone();
    for (b, name) in names.into_iter().enumerate() {
        let len = grads.blocks[b].len();
        let mut check = BlockCheck { name, max_rel_error: 0.0, checked: 0, skipped: 0 };
        for i in pick(len) {
            let orig = work.params().nth(b).unwrap().1.data()[i];
            let set = |w: &mut Sequential<f64>, v: f64| {
                w.params_mut().nth(b).unwrap().1.data_mut()[i] = v;
            };
            set(&mut work, orig + h);
            let plus = probe(&work, input)?;
            set(&mut work, orig - h);
            let minus = probe(&work, input)?;
            set(&mut work, orig);
            match (plus, minus) {
                (Some(p), Some(m)) => {
                    let num = (p - m) / (2.0 * h);
                    let e = rel_error(grads.blocks[b].data()[i], num, cfg.floor);
                    check.max_rel_error = check.max_rel_error.max(e);
                    check.checked += 1;
                }
                _ => check.skipped += 1,
            }
        }
        blocks.push(check);
    }

    if cfg.check_input {
        let mut check = BlockCheck { name: "input".into(), max_rel_error: 0.0, checked: 0, skipped: 0 };
        let mut x = input.clone();
        for i in pick(input.len()) {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + h;
            let plus = probe(net, &x)?;
            x.data_mut()[i] = orig - h;
            let minus = probe(net, &x)?;
            x.data_mut()[i] = orig;
            match (plus, minus) {
                (Some(p), Some(m)) => {
                    let e = rel_error(dx.data()[i], (p - m) / (2.0 * h), cfg.floor);
                    check.max_rel_error = check.max_rel_error.max(e);
                    check.checked += 1;
                }
                _ => check.skipped += 1,
            }
        }
        blocks.push(check);
    }
    Ok(GradCheckReport { tolerance: cfg.tolerance, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{Activation, Dense};

    #[test]
    fn zero_parameter_network_passes_vacuously() {
        let mut net = Sequential::new();
        net.push("act", Activation::Sigmoid);
        let cfg = GradCheckConfig { check_input: false, ..Default::default() };
        let r = grad_check(&net, &DenseTensor::zeros(&[1, 3]), CheckLoss::Projection { seed: 1 }, &cfg).unwrap();
        assert!(r.blocks.is_empty());
        assert!(r.passed());
    }

    #[test]
    fn dense_layer_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Sequential::new();
        net.push("fc", Dense::new(2, 2, &mut rng));
        let x = DenseTensor::new(&[1, 2], vec![0.3, -0.2]).unwrap();
        let r = grad_check(&net, &x, CheckLoss::Projection { seed: 3 }, &GradCheckConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.blocks.iter().map(|b| b.checked).sum::<usize>(), 4 + 2 + 2);
    }
}
