//! Finite-difference checks over every layer kind and every model
//! family/head on miniature shapes, shared by the test suites and the
//! command-line self check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::metrics::Task;
use crate::models::{build, build_frame_autoencoder, Family, ModelSpec};
use crate::nn::{
    grad_check, Activation, CheckLoss, Conv, ConvConfig, ConvTranspose, Crop, Dense, GlobalAvgPool, GradCheckConfig,
    GradCheckReport, Gru, LastStep, Layer, Lstm, MaxPool, Permute, Repeat, Reshape, Sequential,
};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn checked(&self) -> usize {
        self.report.blocks.iter().map(|b| b.checked).sum()
    }

    pub fn passed(&self) -> bool {
        self.report.passed() && self.checked() > 0
    }
}

/// Small widths so every family/head combination checks in well under a second.
pub fn miniature(family: Family, task: Task) -> ModelSpec {
    let mut spec = ModelSpec::new(family, task, 2);
    spec.observed = 4;
    spec.horizon = 8;
    spec.grid = [4, 3];
    spec.target_grid = [4, 3];
    spec.channels = if family == Family::Cnn3d { vec![3, 3, 4, 4] } else { vec![3, 4, 4] };
    spec.temporal_channels = vec![3, 3, 3];
    spec.hidden = 3;
    spec.feature = 5;
    spec.frame_code = 4;
    spec.decoder_channels = 3;
    spec.latent_channels = 2;
    if let Some(c) = spec.camera.as_mut() {
        *c = 1;
    }
    spec
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DenseTensor<f64> {
    DenseTensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn batched(inner: Vec<usize>) -> Vec<usize> {
    let mut shape = vec![2];
    shape.extend(inner);
    shape
}

fn single(name: &str, layer: impl Layer<f64> + 'static, input: &[usize], tolerance: f64) -> Result<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut net = Sequential::new();
    net.push(name, layer);
    let x = uniform(input, -1.0, 1.0, &mut rng);
    let cfg = GradCheckConfig { tolerance, ..Default::default() };
    let report = grad_check(&net, &x, CheckLoss::Projection { seed: 5 }, &cfg)?;
    Ok(SuiteEntry { name: name.to_string(), report })
}

/// Every layer kind on its own, plus dense→sigmoid under BCE.
pub fn layer_suite() -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Sequential::new();
    net.push("fc", Dense::new(5, 3, &mut rng)).push("out", Activation::Sigmoid);
    let x = uniform(&[4, 5], -1.0, 1.0, &mut rng);
    let target = DenseTensor::from_fn(&[4, 3], |i| (i % 2) as f64);
    let cfg = GradCheckConfig { tolerance: 1e-6, ..Default::default() };
    let report = grad_check(&net, &x, CheckLoss::Bce(target), &cfg)?;
    out.push(SuiteEntry { name: "dense+sigmoid+bce".into(), report });

    out.push(single("relu", Activation::Relu, &[3, 7], 1e-4)?);
    out.push(single("sigmoid", Activation::Sigmoid, &[3, 7], 1e-6)?);
    out.push(single("tanh", Activation::Tanh, &[3, 7], 1e-6)?);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let images: [&[usize]; 3] = [&[4], &[4, 3], &[4, 3, 4]];
    for (rank, image) in (1..=3).zip(images) {
        let mut shape = vec![2, 3];
        shape.extend_from_slice(image);
        let conv = Conv::<f64>::new(ConvConfig::same(rank, 3, 4, 3), &mut rng)?;
        out.push(single(&format!("conv{rank}d"), conv, &shape, 1e-4)?);
        let up = ConvTranspose::<f64>::new(ConvConfig::upsample2(rank, 3, 2), &mut rng)?;
        out.push(single(&format!("tconv{rank}d"), up, &shape, 1e-4)?);
        out.push(single(&format!("maxpool{rank}d"), MaxPool::new(rank), &shape, 1e-4)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    out.push(single("gru", Gru::<f64>::new(4, 5, &mut rng), &[2, 3, 4], 1e-5)?);
    out.push(single("lstm", Lstm::<f64>::new(4, 5, &mut rng), &[2, 3, 4], 1e-5)?);

    out.push(single("reshape", Reshape::new(vec![-1, 6]), &[2, 3, 4], 1e-6)?);
    out.push(single("permute", Permute::new(vec![0, 2, 1]), &[2, 3, 4], 1e-6)?);
    out.push(single("crop", Crop::new(vec![2, 3]), &[2, 3, 4], 1e-6)?);
    out.push(single("repeat", Repeat { times: 4 }, &[2, 3], 1e-6)?);
    out.push(single("last_step", LastStep, &[2, 3, 4], 1e-6)?);
    out.push(single("global_avg_pool", GlobalAvgPool, &[2, 3, 4, 2], 1e-6)?);
    Ok(out)
}

/// All family/head combinations under BCE, the CNN-GRU frame autoencoder,
/// and the 3D-CNN which head on the full 16×9 grid. Large parameter blocks
/// are checked on a seeded subset of entries.
pub fn model_suite() -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    let cfg = GradCheckConfig { tolerance: 1e-4, max_entries: 12, ..Default::default() };
    for family in Family::ALL {
        for task in Task::ALL {
            let spec = miniature(family, task);
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let net = build(&spec, &mut rng)?;
            let x = uniform(&batched(spec.input_shape()), 0.0, 1.0, &mut rng);
            let target = DenseTensor::from_fn(&batched(spec.output_shape()), |_| {
                (rng.gen::<f64>() < 0.3) as u8 as f64
            });
            let report = grad_check(&net, &x, CheckLoss::Bce(target), &cfg)?;
            out.push(SuiteEntry { name: format!("{family}/{task}"), report });
        }
    }

    let spec = miniature(Family::CnnGru, Task::Which);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = build_frame_autoencoder(&spec, &mut rng)?;
    let x = uniform(&[3, 2, 4, 3], 0.0, 1.0, &mut rng);
    let report = grad_check(&net, &x, CheckLoss::Projection { seed: 2 }, &cfg)?;
    out.push(SuiteEntry { name: "cnn_gru/frame_autoencoder".into(), report });

    let mut spec = ModelSpec::new(Family::Cnn3d, Task::Which, 2);
    spec.channels = vec![2, 3, 3, 4];
    spec.feature = 6;
    spec.observed = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = build(&spec, &mut rng)?;
    let x = uniform(&batched(spec.input_shape()), 0.0, 1.0, &mut rng);
    let target = DenseTensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0])?;
    let cfg = GradCheckConfig { max_entries: 20, ..cfg };
    let report = grad_check(&net, &x, CheckLoss::Bce(target), &cfg)?;
    out.push(SuiteEntry { name: "cnn3d/which@16x9".into(), report });
    Ok(out)
}
