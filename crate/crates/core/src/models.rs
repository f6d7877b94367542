//! The six forecasting architectures and their Which/When/Where heads.
//!
//! Coordinate families (`gru`, `lstm`, `cnn1d`) read one camera's box track
//! `[b, n, 4]` and are trained per departure camera. Tensor families
//! (`cnn2d1d`, `cnn3d`, `cnn_gru`) read trajectory tensors `[b, k, n, w, h]`
//! with one model for every camera. Heads emit `[b, k]`, `[b, k, m]` or
//! `[b, k, m, tw, th]` probabilities.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{BoundingBox, TrajectoryTensor};
use crate::error::{Error, Result};
use crate::metrics::Task;
use crate::nn::{
    bce_loss, Activation, AdamState, Conv, ConvConfig, ConvTranspose, Crop, Dense, GlobalAvgPool, Gru, LastStep,
    Lstm, MaxPool, ModelWeights, Permute, Repeat, Reshape, Sequential,
};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gru,
    Lstm,
    Cnn1d,
    Cnn2d1d,
    Cnn3d,
    CnnGru,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Gru,
        Family::Lstm,
        Family::Cnn1d,
        Family::Cnn2d1d,
        Family::Cnn3d,
        Family::CnnGru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gru => "gru",
            Family::Lstm => "lstm",
            Family::Cnn1d => "cnn1d",
            Family::Cnn2d1d => "cnn2d1d",
            Family::Cnn3d => "cnn3d",
            Family::CnnGru => "cnn_gru",
        }
    }

    pub fn is_coordinate(self) -> bool {
        matches!(self, Family::Gru | Family::Lstm | Family::Cnn1d)
    }

    /// Families whose decoders unroll a GRU over the horizon.
    fn recurrent_decoder(self) -> bool {
        matches!(self, Family::Gru | Family::Lstm | Family::CnnGru)
    }

    /// Adam learning rate: 1e-3 for coordinate models, 1e-4 for tensor models.
    pub fn default_learning_rate(self) -> f64 {
        if self.is_coordinate() {
            1e-3
        } else {
            1e-4
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model family {s:?}")))
    }
}

/// Architecture and problem dimensions of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub task: Task,
    pub cameras: usize,
    pub observed: usize,
    pub horizon: usize,
    /// Input heatmap grid (tensor families).
    pub grid: [usize; 2],
    /// Output grid of the where head.
    pub target_grid: [usize; 2],
    /// Encoder output size: 128 for coordinate models, 512 for tensor models.
    pub feature: usize,
    /// Encoder convolution widths, one entry per layer.
    pub channels: Vec<usize>,
    /// Temporal convolution widths of the 2D-1D model.
    pub temporal_channels: Vec<usize>,
    /// Hidden units of recurrent encoders and decoders.
    pub hidden: usize,
    /// Per-timestep code size of the CNN-GRU autoencoder.
    pub frame_code: usize,
    /// Width of the 1D transposed-convolution decoders.
    pub decoder_channels: usize,
    /// Channels of the per-step where latent map (of the latent volume for
    /// the 3D-CNN, which defaults to 6 to stay under 2M parameters).
    pub latent_channels: usize,
    /// Departure camera for coordinate families.
    pub camera: Option<usize>,
}

impl ModelSpec {
    /// Defaults for `k` cameras, 10 observed and 60 forecast steps, and a
    /// 16×9 grid.
    pub fn new(family: Family, task: Task, cameras: usize) -> Self {
        let (feature, channels) = match family {
            Family::Gru | Family::Lstm | Family::Cnn1d => (128, vec![32, 64, 128]),
            Family::Cnn2d1d => (512, vec![32, 64, 128]),
            Family::Cnn3d => (512, vec![32, 64, 128, 256]),
            Family::CnnGru => (512, vec![32, 64, 128]),
        };
        Self {
            family,
            task,
            cameras,
            observed: 10,
            horizon: 60,
            grid: [16, 9],
            target_grid: [16, 9],
            feature,
            channels,
            temporal_channels: vec![128, 128, 128],
            hidden: 128,
            frame_code: 128,
            decoder_channels: 32,
            latent_channels: if family == Family::Cnn3d { 6 } else { 8 },
            camera: family.is_coordinate().then_some(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("model spec: {what}")));
        if self.cameras == 0 || self.observed == 0 || self.horizon == 0 {
            return bad("cameras, observed and horizon must be positive");
        }
        if self.grid.contains(&0) || self.target_grid.contains(&0) {
            return bad("grids must be non-empty");
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("encoder channels must be non-empty and positive");
        }
        if self.family == Family::Cnn3d && self.channels.len() != 4 {
            return bad("cnn3d needs four convolution widths");
        }
        if self.family == Family::Cnn2d1d && self.temporal_channels.is_empty() {
            return bad("cnn2d1d needs temporal channels");
        }
        match (self.family.is_coordinate(), self.camera) {
            (true, None) => return bad("coordinate families need a departure camera"),
            (true, Some(c)) if c >= self.cameras => return bad("departure camera out of range"),
            (false, Some(_)) => return bad("tensor families are not bound to a camera"),
            _ => {}
        }
        Ok(())
    }

    /// Shape of one input sample (without the batch axis).
    pub fn input_shape(&self) -> Vec<usize> {
        if self.family.is_coordinate() {
            vec![self.observed, 4]
        } else {
            vec![self.cameras, self.observed, self.grid[0], self.grid[1]]
        }
    }

    /// Shape of one output sample (without the batch axis).
    pub fn output_shape(&self) -> Vec<usize> {
        self.task
            .target_shape(self.cameras, self.horizon, self.target_grid[0], self.target_grid[1])
    }

    fn where_latent(&self) -> [usize; 2] {
        [self.target_grid[0].div_ceil(4), self.target_grid[1].div_ceil(4)]
    }
}

/// A built network together with its spec.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub net: Sequential<f64>,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self> {
        let net = build(&spec, rng)?;
        Ok(Self { spec, net })
    }

    /// Batched prediction; `input` is `[b, ..input_shape]`.
    pub fn predict(&self, input: &DenseTensor<f64>) -> Result<DenseTensor<f64>> {
        self.check_input(input)?;
        self.net.infer(input)
    }

    pub fn check_input(&self, input: &DenseTensor<f64>) -> Result<()> {
        let mut expected = vec![input.shape().first().copied().unwrap_or(1)];
        expected.extend(self.spec.input_shape());
        input.expect_shape(&format!("{} input", self.spec.family), &expected)
    }

    pub fn weights(&self) -> ModelWeights {
        ModelWeights::from_network(&self.net)
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }
}

/// One BCE gradient step on a mini-batch; returns the pre-update loss.
pub fn train_step(
    net: &mut Sequential<f64>,
    adam: &mut AdamState<f64>,
    input: &DenseTensor<f64>,
    target: &DenseTensor<f64>,
) -> Result<f64> {
    let (pred, tape) = net.forward(input)?;
    if pred.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::State("network output is not finite".into()));
    }
    let (loss, dy) = bce_loss(&pred, target)?;
    if !loss.is_finite() {
        return Err(Error::State(format!("training loss diverged ({loss})")));
    }
    let (_, grads) = net.backward(&tape, &dy)?;
    adam.update(net.params_mut().map(|(_, p)| p), &grads.blocks)?;
    Ok(loss)
}

fn conv<R: Rng + ?Sized>(rank: usize, cin: usize, cout: usize, rng: &mut R) -> Result<Conv<f64>> {
    Conv::new(ConvConfig::same(rank, cin, cout, 3), rng)
}

fn upsample<R: Rng + ?Sized>(rank: usize, cin: usize, cout: usize, rng: &mut R) -> Result<ConvTranspose<f64>> {
    ConvTranspose::new(ConvConfig::upsample2(rank, cin, cout), rng)
}

fn isz(v: usize) -> isize {
    v as isize
}

/// Per-timestep 2D stage mapping `[b', k, w, h]` to `[b', channels.last]`.
fn frame_stage<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Sequential<f64>> {
    let mut s = Sequential::new();
    let mut cin = spec.cameras;
    for (i, &c) in spec.channels.iter().enumerate() {
        s.push(format!("conv{}", i + 1), conv(2, cin, c, rng)?)
            .push(format!("relu{}", i + 1), Activation::Relu)
            .push(format!("pool{}", i + 1), MaxPool::new(2));
        cin = c;
    }
    s.push("gap", GlobalAvgPool);
    Ok(s)
}

/// Encoder: input sample batch to `[b, feature]`.
fn encoder<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<(Sequential<f64>, usize)> {
    let mut s = Sequential::new();
    let (k, n) = (spec.cameras, spec.observed);
    let [w, h] = spec.grid;
    let width = match spec.family {
        Family::Gru => {
            s.push("gru", Gru::new(4, spec.hidden, rng)).push("last", LastStep);
            spec.hidden
        }
        Family::Lstm => {
            s.push("lstm", Lstm::new(4, spec.hidden, rng)).push("last", LastStep);
            spec.hidden
        }
        Family::Cnn1d => {
            s.push("to_channels", Permute::new(vec![0, 2, 1]));
            let mut cin = 4;
            for (i, &c) in spec.channels.iter().enumerate() {
                s.push(format!("conv{}", i + 1), conv(1, cin, c, rng)?)
                    .push(format!("relu{}", i + 1), Activation::Relu);
                cin = c;
            }
            s.push("gap", GlobalAvgPool)
                .push("fc", Dense::new(cin, spec.feature, rng))
                .push("fc_relu", Activation::Relu);
            spec.feature
        }
        Family::Cnn3d => {
            let mut cin = k;
            for (i, &c) in spec.channels.iter().enumerate() {
                s.push(format!("conv{}", i + 1), conv(3, cin, c, rng)?)
                    .push(format!("relu{}", i + 1), Activation::Relu)
                    .push(format!("pool{}", i + 1), MaxPool::new(3));
                cin = c;
            }
            s.push("gap", GlobalAvgPool)
                .push("fc", Dense::new(cin, spec.feature, rng))
                .push("fc_relu", Activation::Relu);
            spec.feature
        }
        Family::Cnn2d1d => {
            s.push("time_major", Permute::new(vec![0, 2, 1, 3, 4]))
                .push("frames", Reshape::new(vec![-1, isz(k), isz(w), isz(h)]));
            s.extend("frame", frame_stage(spec, rng)?);
            let c2 = *spec.channels.last().unwrap();
            s.push("sequence", Reshape::new(vec![-1, isz(n), isz(c2)]))
                .push("to_channels", Permute::new(vec![0, 2, 1]));
            let mut cin = c2;
            for (i, &c) in spec.temporal_channels.iter().enumerate() {
                s.push(format!("tconv{}", i + 1), conv(1, cin, c, rng)?)
                    .push(format!("trelu{}", i + 1), Activation::Relu)
                    .push(format!("tpool{}", i + 1), MaxPool::new(1));
                cin = c;
            }
            s.push("tgap", GlobalAvgPool)
                .push("fc", Dense::new(cin, spec.feature, rng))
                .push("fc_relu", Activation::Relu);
            spec.feature
        }
        Family::CnnGru => {
            s.push("time_major", Permute::new(vec![0, 2, 1, 3, 4]))
                .push("frames", Reshape::new(vec![-1, isz(k), isz(w), isz(h)]));
            s.extend("frame", frame_code_stage(spec, rng)?);
            s.push("sequence", Reshape::new(vec![-1, isz(n), isz(spec.frame_code)]))
                .push("gru", Gru::new(spec.frame_code, spec.feature, rng))
                .push("last", LastStep);
            spec.feature
        }
    };
    Ok((s, width))
}

/// Frame stage plus the projection to the autoencoder code.
fn frame_code_stage<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Sequential<f64>> {
    let mut s = frame_stage(spec, rng)?;
    let c = *spec.channels.last().unwrap();
    s.push("code", Dense::new(c, spec.frame_code, rng))
        .push("code_relu", Activation::Relu);
    Ok(s)
}

/// `[b, feature] → [b, C, L]` via a dense layer and four 1D upsampling
/// stages, cropped to the horizon: `[b, out, m]`.
fn temporal_upsampler<R: Rng + ?Sized>(
    spec: &ModelSpec,
    feature: usize,
    out: usize,
    rng: &mut R,
) -> Result<Sequential<f64>> {
    let c = spec.decoder_channels;
    let l0 = spec.horizon.div_ceil(16);
    let mut s = Sequential::new();
    s.push("fc", Dense::new(feature, c * l0, rng))
        .push("fc_relu", Activation::Relu)
        .push("seed", Reshape::new(vec![-1, isz(c), isz(l0)]));
    for i in 1..=4 {
        let cout = if i == 4 { out } else { c };
        s.push(format!("up{i}"), upsample(1, c, cout, rng)?);
        if i < 4 {
            s.push(format!("up_relu{i}"), Activation::Relu);
        }
    }
    s.push("crop", Crop::new(vec![out, spec.horizon]));
    Ok(s)
}

/// `[b, feature] → [b, m, hidden]` by feeding the feature to a decoder GRU
/// at every step.
fn recurrent_unroll<R: Rng + ?Sized>(spec: &ModelSpec, feature: usize, rng: &mut R) -> Result<Sequential<f64>> {
    let mut s = Sequential::new();
    s.push("repeat", Repeat { times: spec.horizon })
        .push("gru", Gru::new(feature, spec.hidden, rng));
    Ok(s)
}

/// Per-step latent maps `[b·m, L, lw, lh]` to `[b, k, m, tw, th]`.
fn spatial_upsampler<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Sequential<f64>> {
    let (k, m, l) = (spec.cameras, spec.horizon, spec.latent_channels);
    let [tw, th] = spec.target_grid;
    let mut s = Sequential::new();
    s.push("up1", upsample(2, l, l, rng)?)
        .push("up_relu1", Activation::Relu)
        .push("up2", upsample(2, l, k, rng)?)
        .push("crop", Crop::new(vec![k, tw, th]))
        .push("unflatten", Reshape::new(vec![-1, isz(m), isz(k), isz(tw), isz(th)]))
        .push("camera_major", Permute::new(vec![0, 2, 1, 3, 4]));
    Ok(s)
}

fn head<R: Rng + ?Sized>(spec: &ModelSpec, feature: usize, rng: &mut R) -> Result<Sequential<f64>> {
    let k = spec.cameras;
    let [lw, lh] = spec.where_latent();
    let latent = spec.latent_channels * lw * lh;
    let per_step_latent = Reshape::new(vec![-1, isz(spec.latent_channels), isz(lw), isz(lh)]);
    let mut s = Sequential::new();
    match spec.task {
        Task::Which => {
            s.push("fc", Dense::new(feature, k, rng));
        }
        Task::When if spec.family.recurrent_decoder() => {
            s.extend("dec", recurrent_unroll(spec, feature, rng)?);
            s.push("fc", Dense::new(spec.hidden, k, rng))
                .push("camera_major", Permute::new(vec![0, 2, 1]));
        }
        Task::When => {
            s.extend("dec", temporal_upsampler(spec, feature, k, rng)?);
        }
        Task::Where if spec.family.recurrent_decoder() => {
            s.extend("dec", recurrent_unroll(spec, feature, rng)?);
            s.push("latent", Dense::new(spec.hidden, latent, rng))
                .push("latent_relu", Activation::Relu)
                .push("maps", per_step_latent);
            s.extend("map", spatial_upsampler(spec, rng)?);
        }
        Task::Where if spec.family == Family::Cnn3d => {
            let (l, m) = (spec.latent_channels, spec.horizon);
            let [tw, th] = spec.target_grid;
            let lm = m.div_ceil(4);
            s.push("fc", Dense::new(feature, l * lm * lw * lh, rng))
                .push("fc_relu", Activation::Relu)
                .push("volume", Reshape::new(vec![-1, isz(l), isz(lm), isz(lw), isz(lh)]))
                .push("up1", upsample(3, l, l, rng)?)
                .push("up_relu1", Activation::Relu)
                .push("up2", upsample(3, l, k, rng)?)
                .push("crop", Crop::new(vec![k, m, tw, th]));
        }
        Task::Where => {
            s.extend("dec", temporal_upsampler(spec, feature, latent, rng)?);
            s.push("step_major", Permute::new(vec![0, 2, 1]))
                .push("maps", per_step_latent);
            s.extend("map", spatial_upsampler(spec, rng)?);
        }
    }
    s.push("sigmoid", Activation::Sigmoid);
    Ok(s)
}

/// Builds the network for `spec` with Glorot-initialized weights.
pub fn build<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Sequential<f64>> {
    spec.validate()?;
    let (enc, feature) = encoder(spec, rng)?;
    let mut net = Sequential::new();
    net.extend("enc", enc);
    net.extend("head", head(spec, feature, rng)?);
    Ok(net)
}

/// Per-timestep convolutional autoencoder of the CNN-GRU model:
/// `[b, k, w, h] → [b, k, w, h]`. Its `frame.*` parameters share names
/// with the `enc.frame.*` parameters of the full model.
pub fn build_frame_autoencoder<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Sequential<f64>> {
    spec.validate()?;
    let (k, l) = (spec.cameras, spec.latent_channels);
    let [w, h] = spec.grid;
    let (lw, lh) = (w.div_ceil(4), h.div_ceil(4));
    let mut s = Sequential::new();
    s.extend("frame", frame_code_stage(spec, rng)?);
    s.push("recon.fc", Dense::new(spec.frame_code, l * lw * lh, rng))
        .push("recon.relu", Activation::Relu)
        .push("recon.maps", Reshape::new(vec![-1, isz(l), isz(lw), isz(lh)]))
        .push("recon.up1", upsample(2, l, l, rng)?)
        .push("recon.up_relu1", Activation::Relu)
        .push("recon.up2", upsample(2, l, k, rng)?)
        .push("recon.crop", Crop::new(vec![k, w, h]))
        .push("recon.sigmoid", Activation::Sigmoid);
    Ok(s)
}

/// Copies the autoencoder's frame encoder into a CNN-GRU network.
pub fn transfer_frame_encoder(autoencoder: &Sequential<f64>, net: &mut Sequential<f64>) -> Result<usize> {
    let weights = ModelWeights::from_network(autoencoder);
    let mut copied = 0;
    for (name, p) in net.params_mut() {
        let Some(inner) = name.strip_prefix("enc.") else { continue };
        if !inner.starts_with("frame.") {
            continue;
        }
        let src = weights
            .get(inner)
            .ok_or_else(|| Error::InvalidInput(format!("autoencoder lacks {inner}")))?;
        src.expect_shape(&name, p.shape())?;
        *p = src.clone();
        copied += 1;
    }
    Ok(copied)
}

/// Reconstruction loss for smoothed (non-binary) heatmaps: cross-entropy
/// against soft targets in `[0, 1]`.
pub fn soft_bce_loss(pred: &DenseTensor<f64>, target: &DenseTensor<f64>) -> Result<(f64, DenseTensor<f64>)> {
    target.expect_shape("reconstruction target", pred.shape())?;
    if target.data().iter().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(Error::InvalidInput("reconstruction targets must lie in [0, 1]".into()));
    }
    let lo = crate::nn::BCE_CLAMP;
    let n = pred.len() as f64;
    let mut total = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            let p = p.clamp(lo, 1.0 - lo);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            (p - y) / (p * (1.0 - p)) / n
        })
        .collect();
    Ok((total / n, DenseTensor::new(pred.shape(), grad)?))
}

/// Zeros every camera slice except `keep` (0-based).
pub fn single_view_mask(z: &TrajectoryTensor<f64>, keep: usize) -> Result<TrajectoryTensor<f64>> {
    z.keep_single_camera(keep)
}

/// `[n, 4]` box rows for one camera; missing steps are zero rows.
pub fn coordinate_input(boxes: &[Option<BoundingBox>]) -> DenseTensor<f64> {
    let data = boxes
        .iter()
        .flat_map(|b| b.map(|b| b.to_array()).unwrap_or([0.0; 4]))
        .collect();
    DenseTensor::new(&[boxes.len(), 4], data).expect("n × 4 values")
}

/// Trained models for one spec: `k` per-camera networks for coordinate
/// families, a single network for tensor families.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    pub spec: ModelSpec,
    pub models: Vec<Model>,
}

impl ModelRegistry {
    pub fn new<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        let models = if spec.family.is_coordinate() {
            (0..spec.cameras)
                .map(|c| {
                    let s = ModelSpec { camera: Some(c), ..spec.clone() };
                    Model::new(s, rng)
                })
                .collect::<Result<_>>()?
        } else {
            vec![Model::new(ModelSpec { camera: None, ..spec.clone() }, rng)?]
        };
        Ok(Self { spec: spec.clone(), models })
    }

    pub fn weight_sets(&self) -> usize {
        self.models.len()
    }

    /// The model responsible for samples departing from `camera`.
    pub fn for_camera(&self, camera: usize) -> Result<&Model> {
        if camera >= self.spec.cameras {
            return Err(Error::InvalidInput(format!("camera {camera} out of range")));
        }
        Ok(if self.spec.family.is_coordinate() {
            &self.models[camera]
        } else {
            &self.models[0]
        })
    }

    pub fn for_camera_mut(&mut self, camera: usize) -> Result<&mut Model> {
        if camera >= self.spec.cameras {
            return Err(Error::InvalidInput(format!("camera {camera} out of range")));
        }
        Ok(if self.spec.family.is_coordinate() {
            &mut self.models[camera]
        } else {
            &mut self.models[0]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn default_output_shapes() {
        for family in Family::ALL {
            for task in Task::ALL {
                let mut spec = ModelSpec::new(family, task, 3);
                spec.channels = spec.channels.iter().map(|c| c / 8).collect();
                spec.temporal_channels = vec![8, 8, 8];
                spec.hidden = 8;
                spec.feature = 16;
                spec.frame_code = 8;
                let model = Model::new(spec.clone(), &mut rng()).unwrap();
                let mut shape = vec![2];
                shape.extend(spec.input_shape());
                let y = model.predict(&DenseTensor::zeros(&shape)).unwrap();
                let mut expected = vec![2];
                expected.extend(spec.output_shape());
                assert_eq!(y.shape(), expected.as_slice(), "{family} {task}");
                assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn where_head_ignores_input_grid() {
        for grid in [[16, 9], [32, 18], [48, 27]] {
            let mut spec = ModelSpec::new(Family::Cnn3d, Task::Where, 2);
            spec.channels = vec![2, 2, 2, 2];
            spec.feature = 8;
            spec.grid = grid;
            let model = Model::new(spec, &mut rng()).unwrap();
            let y = model.predict(&DenseTensor::zeros(&[1, 2, 10, grid[0], grid[1]])).unwrap();
            assert_eq!(y.shape(), &[1, 2, 60, 16, 9]);
        }
    }

    #[test]
    fn default_sizes_stay_under_two_million_parameters() {
        for family in Family::ALL {
            for task in Task::ALL {
                let model = Model::new(ModelSpec::new(family, task, 15), &mut rng()).unwrap();
                assert!(model.param_count() < 2_000_000, "{family} {task}: {}", model.param_count());
            }
        }
    }

    #[test]
    fn wrong_sequence_length_is_shape_error() {
        let model = Model::new(ModelSpec::new(Family::Gru, Task::Which, 3), &mut rng()).unwrap();
        let err = model.predict(&DenseTensor::zeros(&[1, 9, 4]));
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn registry_counts() {
        let spec = ModelSpec::new(Family::Gru, Task::Which, 4);
        assert_eq!(ModelRegistry::new(&spec, &mut rng()).unwrap().weight_sets(), 4);
        let mut spec = ModelSpec::new(Family::Cnn3d, Task::Which, 4);
        spec.channels = vec![2, 2, 2, 2];
        spec.camera = None;
        assert_eq!(ModelRegistry::new(&spec, &mut rng()).unwrap().weight_sets(), 1);
    }

    #[test]
    fn zero_weights_give_one_half() {
        let mut model = Model::new(ModelSpec::new(Family::Gru, Task::Which, 3), &mut rng()).unwrap();
        for (name, p) in model.net.params_mut() {
            if name.starts_with("head.") {
                p.fill(0.0);
            }
        }
        let y = model.predict(&DenseTensor::zeros(&[1, 10, 4])).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5, 0.5]);
    }
}
