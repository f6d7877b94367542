//! The layer abstraction and the parameter-free / dense layers.

use std::any::Any;
use std::fmt::{self, Debug};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::linalg::{gemm, MatRef};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv1d,
    Conv2d,
    Conv3d,
    Tconv1d,
    Tconv2d,
    Tconv3d,
    Maxpool,
    Relu,
    Sigmoid,
    Tanh,
    GruCell,
    LstmCell,
    GlobalAvgPool,
    Reshape,
    Permute,
    Crop,
    Repeat,
    LastStep,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv1d => "conv1d",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Conv3d => "conv3d",
            LayerKind::Tconv1d => "tconv1d",
            LayerKind::Tconv2d => "tconv2d",
            LayerKind::Tconv3d => "tconv3d",
            LayerKind::Maxpool => "maxpool",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Tanh => "tanh",
            LayerKind::GruCell => "gru",
            LayerKind::LstmCell => "lstm",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Reshape => "reshape",
            LayerKind::Permute => "permute",
            LayerKind::Crop => "crop",
            LayerKind::Repeat => "repeat",
            LayerKind::LastStep => "last_step",
        }
    }
}

/// Activations a layer keeps from `forward` for its `backward`.
pub struct Cache(Box<dyn Any + Send + Sync>);

impl Cache {
    pub(crate) fn new<C: Any + Send + Sync>(c: C) -> Self {
        Cache(Box::new(c))
    }

    /// A cache that no layer accepts, standing in for a missing forward pass.
    pub fn empty() -> Self {
        Cache(Box::new(()))
    }

    pub(crate) fn get<C: Any>(&self, layer: LayerKind) -> Result<&C> {
        self.0.downcast_ref::<C>().ok_or_else(|| {
            Error::State(format!("{} backward called without its forward cache", layer.name()))
        })
    }
}

impl Debug for Cache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Cache(..)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: &'static str,
    pub value: DenseTensor<T>,
}

impl<T: Scalar> Param<T> {
    pub(crate) fn new(name: &'static str, value: DenseTensor<T>) -> Self {
        Self { name, value }
    }
}

/// A differentiable layer. The leading axis of every input is the batch.
///
/// `forward` never mutates the layer; gradients of parameters are
/// accumulated into caller-owned tensors shaped like [`Layer::params`].
pub trait Layer<T: Scalar>: Debug + Send + Sync {
    fn kind(&self) -> LayerKind;

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)>;

    fn backward(
        &self,
        cache: &Cache,
        grad_output: &DenseTensor<T>,
        param_grads: &mut [DenseTensor<T>],
    ) -> Result<DenseTensor<T>>;

    fn params(&self) -> &[Param<T>] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut []
    }

    fn box_clone(&self) -> Box<dyn Layer<T>>;

    /// Fingerprint of the non-differentiable choices (ReLU signs, pooling
    /// winners, ...) made during the forward pass behind `cache`.
    fn decisions(&self, _cache: &Cache) -> u64 {
        0
    }
}

impl<T: Scalar> Clone for Box<dyn Layer<T>> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

pub(crate) fn fnv_mix(hash: u64, value: u64) -> u64 {
    (hash ^ value).wrapping_mul(0x0000_0100_0000_01b3)
}

pub(crate) const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// Glorot-uniform sample in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> DenseTensor<T> {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    DenseTensor::from_fn(shape, |_| T::of(rng.gen_range(-limit..=limit)))
}

fn check_grad_shape<T: Scalar>(kind: LayerKind, out_shape: &[usize], grad: &DenseTensor<T>) -> Result<()> {
    grad.expect_shape(&format!("{} upstream gradient", kind.name()), out_shape)
}

// ---------------------------------------------------------------------------
// Dense

/// Affine map over the last axis: `y = x·Wᵀ + b` with `W: [out, in]`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    params: [Param<T>; 2],
}

struct DenseCache<T> {
    input: DenseTensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self::from_parts(
            glorot(&[outputs, inputs], inputs, outputs, rng),
            DenseTensor::zeros(&[outputs]),
        )
        .expect("consistent shapes")
    }

    pub fn from_parts(weight: DenseTensor<T>, bias: DenseTensor<T>) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::InvalidInput(format!("dense weight shape {:?}", weight.shape())));
        }
        bias.expect_shape("dense bias", &[weight.shape()[0]])?;
        Ok(Self {
            params: [Param::new("weight", weight), Param::new("bias", bias)],
        })
    }

    pub fn inputs(&self) -> usize {
        self.params[0].value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.params[0].value.shape()[0]
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Dense
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        let (fin, fout) = (self.inputs(), self.outputs());
        let shape = input.shape();
        if shape.is_empty() || shape[shape.len() - 1] != fin {
            let mut expected = shape.to_vec();
            if let Some(last) = expected.last_mut() {
                *last = fin;
            } else {
                expected.push(fin);
            }
            return Err(Error::shape("dense input", &expected, shape));
        }
        let rows = input.len() / fin;
        let bias = self.params[1].value.data();
        let mut out: Vec<T> = (0..rows).flat_map(|_| bias.iter().copied()).collect();
        gemm(
            T::one(),
            MatRef::new(input.data(), rows, fin),
            MatRef::new(self.params[0].value.data(), fout, fin).t(),
            T::one(),
            &mut out,
        );
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().unwrap() = fout;
        Ok((
            DenseTensor::new(&out_shape, out)?,
            Cache::new(DenseCache { input: input.clone() }),
        ))
    }

    fn backward(
        &self,
        cache: &Cache,
        grad_output: &DenseTensor<T>,
        param_grads: &mut [DenseTensor<T>],
    ) -> Result<DenseTensor<T>> {
        let c: &DenseCache<T> = cache.get(self.kind())?;
        let (fin, fout) = (self.inputs(), self.outputs());
        let mut out_shape = c.input.shape().to_vec();
        *out_shape.last_mut().unwrap() = fout;
        check_grad_shape(self.kind(), &out_shape, grad_output)?;
        let rows = c.input.len() / fin;
        let dy = MatRef::new(grad_output.data(), rows, fout);
        let (gw, gb) = param_grads.split_at_mut(1);
        gemm(T::one(), dy.t(), MatRef::new(c.input.data(), rows, fin), T::one(), gw[0].data_mut());
        let gb = gb[0].data_mut();
        for row in grad_output.data().chunks(fout) {
            for (g, &d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![T::zero(); rows * fin];
        gemm(T::one(), dy, MatRef::new(self.params[0].value.data(), fout, fin), T::zero(), &mut dx);
        DenseTensor::new(c.input.shape(), dx)
    }

    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------------
// Element-wise activations

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

struct ActivationCache<T> {
    /// Input for ReLU, output for sigmoid/tanh.
    values: DenseTensor<T>,
}

impl<T: Scalar> Layer<T> for Activation {
    fn kind(&self) -> LayerKind {
        match self {
            Activation::Relu => LayerKind::Relu,
            Activation::Sigmoid => LayerKind::Sigmoid,
            Activation::Tanh => LayerKind::Tanh,
        }
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        let out = match self {
            Activation::Relu => input.map(|v| v.max(T::zero())),
            Activation::Sigmoid => input.map(sigmoid),
            Activation::Tanh => input.map(|v| v.tanh()),
        };
        let values = if *self == Activation::Relu {
            input.clone()
        } else {
            out.clone()
        };
        Ok((out, Cache::new(ActivationCache { values })))
    }

    fn backward(
        &self,
        cache: &Cache,
        grad_output: &DenseTensor<T>,
        _param_grads: &mut [DenseTensor<T>],
    ) -> Result<DenseTensor<T>> {
        let c: &ActivationCache<T> = cache.get(Layer::<T>::kind(self))?;
        check_grad_shape(Layer::<T>::kind(self), c.values.shape(), grad_output)?;
        let local: fn(T) -> T = match self {
            Activation::Relu => |x| if x > T::zero() { T::one() } else { T::zero() },
            Activation::Sigmoid => |y| y * (T::one() - y),
            Activation::Tanh => |y| T::one() - y * y,
        };
        let data = c
            .values
            .data()
            .iter()
            .zip(grad_output.data())
            .map(|(&v, &g)| g * local(v))
            .collect();
        DenseTensor::new(c.values.shape(), data)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(*self)
    }

    fn decisions(&self, cache: &Cache) -> u64 {
        if *self != Activation::Relu {
            return 0;
        }
        let Ok(c) = cache.get::<ActivationCache<T>>(LayerKind::Relu) else {
            return 0;
        };
        c.values
            .data()
            .iter()
            .fold(FNV_OFFSET, |h, &v| fnv_mix(h, (v > T::zero()) as u64))
    }
}

// ---------------------------------------------------------------------------
// Shape plumbing

/// Reshape keeping element order; one entry may be `-1` (inferred). The
/// batch axis may be merged or split as long as the total count matches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reshape {
    target: Vec<isize>,
}

impl Reshape {
    pub fn new(target: Vec<isize>) -> Self {
        Self { target }
    }

    fn resolve(&self, count: usize) -> Result<Vec<usize>> {
        let known: usize = self.target.iter().filter(|&&d| d >= 0).map(|&d| d as usize).product();
        let inferred = self.target.iter().filter(|&&d| d < 0).count();
        let bad = || Error::InvalidInput(format!("cannot reshape {count} values to {:?}", self.target));
        match inferred {
            0 if known == count => Ok(self.target.iter().map(|&d| d as usize).collect()),
            1 if known > 0 && count % known == 0 => Ok(self
                .target
                .iter()
                .map(|&d| if d < 0 { count / known } else { d as usize })
                .collect()),
            _ => Err(bad()),
        }
    }
}

struct ShapeCache {
    input_shape: Vec<usize>,
}

impl<T: Scalar> Layer<T> for Reshape {
    fn kind(&self) -> LayerKind {
        LayerKind::Reshape
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        let shape = self.resolve(input.len())?;
        Ok((
            input.clone().reshape(&shape)?,
            Cache::new(ShapeCache { input_shape: input.shape().to_vec() }),
        ))
    }

    fn backward(&self, cache: &Cache, grad: &DenseTensor<T>, _: &mut [DenseTensor<T>]) -> Result<DenseTensor<T>> {
        let c: &ShapeCache = cache.get(LayerKind::Reshape)?;
        grad.clone().reshape(&c.input_shape)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permute {
    axes: Vec<usize>,
}

impl Permute {
    pub fn new(axes: Vec<usize>) -> Self {
        Self { axes }
    }
}

impl<T: Scalar> Layer<T> for Permute {
    fn kind(&self) -> LayerKind {
        LayerKind::Permute
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        Ok((
            input.permute(&self.axes)?,
            Cache::new(ShapeCache { input_shape: input.shape().to_vec() }),
        ))
    }

    fn backward(&self, cache: &Cache, grad: &DenseTensor<T>, _: &mut [DenseTensor<T>]) -> Result<DenseTensor<T>> {
        let c: &ShapeCache = cache.get(LayerKind::Permute)?;
        let mut inverse = vec![0; self.axes.len()];
        for (i, &a) in self.axes.iter().enumerate() {
            inverse[a] = i;
        }
        let dx = grad.permute(&inverse)?;
        dx.expect_shape("permute gradient", &c.input_shape)?;
        Ok(dx)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// Keeps the leading `sizes[i]` entries of non-batch axis `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crop {
    sizes: Vec<usize>,
}

impl Crop {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self { sizes }
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != self.sizes.len() + 1
            || input[1..].iter().zip(&self.sizes).any(|(&d, &s)| s > d || s == 0)
        {
            return Err(Error::InvalidInput(format!("cannot crop {input:?} to {:?}", self.sizes)));
        }
        let mut s = vec![input[0]];
        s.extend_from_slice(&self.sizes);
        Ok(s)
    }
}

/// Copies between a full tensor and its leading-corner crop.
fn crop_copy<T: Scalar>(full: &[usize], crop: &[usize], src: &[T], dst: &mut [T], to_crop: bool) {
    let full_strides = crate::tensor::strides_of(full);
    let count: usize = crop.iter().product();
    let mut idx = vec![0usize; crop.len()];
    for flat in 0..count {
        let off: usize = idx.iter().zip(&full_strides).map(|(i, s)| i * s).sum();
        if to_crop {
            dst[flat] = src[off];
        } else {
            dst[off] = src[flat];
        }
        for ax in (0..crop.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < crop[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

impl<T: Scalar> Layer<T> for Crop {
    fn kind(&self) -> LayerKind {
        LayerKind::Crop
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        let out_shape = self.out_shape(input.shape())?;
        let mut out = DenseTensor::zeros(&out_shape);
        crop_copy(input.shape(), &out_shape, input.data(), out.data_mut(), true);
        Ok((out, Cache::new(ShapeCache { input_shape: input.shape().to_vec() })))
    }

    fn backward(&self, cache: &Cache, grad: &DenseTensor<T>, _: &mut [DenseTensor<T>]) -> Result<DenseTensor<T>> {
        let c: &ShapeCache = cache.get(LayerKind::Crop)?;
        let out_shape = self.out_shape(&c.input_shape)?;
        check_grad_shape(LayerKind::Crop, &out_shape, grad)?;
        let mut dx = DenseTensor::zeros(&c.input_shape);
        crop_copy(&c.input_shape, &out_shape, grad.data(), dx.data_mut(), false);
        Ok(dx)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// `[b, f] → [b, times, f]`: feeds the same vector at every decoder step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Repeat {
    pub times: usize,
}

impl<T: Scalar> Layer<T> for Repeat {
    fn kind(&self) -> LayerKind {
        LayerKind::Repeat
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        if input.rank() != 2 {
            return Err(Error::InvalidInput(format!("repeat expects [b, f], got {:?}", input.shape())));
        }
        let (b, f) = (input.shape()[0], input.shape()[1]);
        let mut out = Vec::with_capacity(b * self.times * f);
        for row in input.data().chunks(f) {
            for _ in 0..self.times {
                out.extend_from_slice(row);
            }
        }
        Ok((
            DenseTensor::new(&[b, self.times, f], out)?,
            Cache::new(ShapeCache { input_shape: input.shape().to_vec() }),
        ))
    }

    fn backward(&self, cache: &Cache, grad: &DenseTensor<T>, _: &mut [DenseTensor<T>]) -> Result<DenseTensor<T>> {
        let c: &ShapeCache = cache.get(LayerKind::Repeat)?;
        let (b, f) = (c.input_shape[0], c.input_shape[1]);
        check_grad_shape(LayerKind::Repeat, &[b, self.times, f], grad)?;
        let mut dx = DenseTensor::zeros(&c.input_shape);
        for (i, block) in grad.data().chunks(self.times * f).enumerate() {
            let row = &mut dx.data_mut()[i * f..(i + 1) * f];
            for step in block.chunks(f) {
                for (d, &g) in row.iter_mut().zip(step) {
                    *d += g;
                }
            }
        }
        Ok(dx)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(*self)
    }
}

/// `[b, t, f] → [b, f]`, the final step of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LastStep;

impl<T: Scalar> Layer<T> for LastStep {
    fn kind(&self) -> LayerKind {
        LayerKind::LastStep
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        if input.rank() != 3 || input.shape()[1] == 0 {
            return Err(Error::InvalidInput(format!("last_step expects [b, t, f], got {:?}", input.shape())));
        }
        let (b, t, f) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let mut out = Vec::with_capacity(b * f);
        for seq in input.data().chunks(t * f) {
            out.extend_from_slice(&seq[(t - 1) * f..]);
        }
        Ok((
            DenseTensor::new(&[b, f], out)?,
            Cache::new(ShapeCache { input_shape: input.shape().to_vec() }),
        ))
    }

    fn backward(&self, cache: &Cache, grad: &DenseTensor<T>, _: &mut [DenseTensor<T>]) -> Result<DenseTensor<T>> {
        let c: &ShapeCache = cache.get(LayerKind::LastStep)?;
        let (b, t, f) = (c.input_shape[0], c.input_shape[1], c.input_shape[2]);
        check_grad_shape(LayerKind::LastStep, &[b, f], grad)?;
        let mut dx = DenseTensor::zeros(&c.input_shape);
        for (i, row) in grad.data().chunks(f).enumerate() {
            let start = (i * t + t - 1) * f;
            dx.data_mut()[start..start + f].copy_from_slice(row);
        }
        Ok(dx)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(*self)
    }
}

/// `[b, c, spatial...] → [b, c]` by averaging the spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalAvgPool;

impl<T: Scalar> Layer<T> for GlobalAvgPool {
    fn kind(&self) -> LayerKind {
        LayerKind::GlobalAvgPool
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        if input.rank() < 3 {
            return Err(Error::InvalidInput(format!(
                "global_avg_pool expects [b, c, spatial..], got {:?}",
                input.shape()
            )));
        }
        let (b, c) = (input.shape()[0], input.shape()[1]);
        let spatial: usize = input.shape()[2..].iter().product();
        let inv = T::one() / T::of(spatial as f64);
        let out = input
            .data()
            .chunks(spatial)
            .map(|s| s.iter().copied().sum::<T>() * inv)
            .collect();
        Ok((
            DenseTensor::new(&[b, c], out)?,
            Cache::new(ShapeCache { input_shape: input.shape().to_vec() }),
        ))
    }

    fn backward(&self, cache: &Cache, grad: &DenseTensor<T>, _: &mut [DenseTensor<T>]) -> Result<DenseTensor<T>> {
        let c: &ShapeCache = cache.get(LayerKind::GlobalAvgPool)?;
        check_grad_shape(LayerKind::GlobalAvgPool, &c.input_shape[..2], grad)?;
        let spatial: usize = c.input_shape[2..].iter().product();
        let inv = T::one() / T::of(spatial as f64);
        let data = grad
            .data()
            .iter()
            .flat_map(|&g| std::iter::repeat(g * inv).take(spatial))
            .collect();
        DenseTensor::new(&c.input_shape, data)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(*self)
    }
}
