//! 1/2/3-D convolution, transposed convolution and max pooling.
//!
//! Every spatial rank is handled as 3-D with leading unit axes, lowered to
//! GEMM through `im2col`/`col2im`. A transposed convolution is the adjoint
//! of the convolution sharing its geometry, so it reuses the same lowering
//! with the roles of `im2col` and `col2im` swapped.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layer::{fnv_mix, glorot, Cache, Layer, LayerKind, Param, FNV_OFFSET};
use crate::nn::linalg::{gemm, MatRef};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Hyperparameters shared by convolutions and transposed convolutions.
/// Kernel, stride and padding apply uniformly to every spatial axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvConfig {
    pub spatial_rank: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvConfig {
    /// Stride-1 convolution with zero padding that preserves the size.
    pub fn same(spatial_rank: usize, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            spatial_rank,
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
        }
    }

    /// Transposed convolution that doubles every spatial size.
    pub fn upsample2(spatial_rank: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            spatial_rank,
            in_channels,
            out_channels,
            kernel: 4,
            stride: 2,
            padding: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.spatial_rank)
            || self.kernel == 0
            || self.stride == 0
            || self.in_channels == 0
            || self.out_channels == 0
        {
            return Err(Error::InvalidInput(format!("invalid convolution config {self:?}")));
        }
        Ok(())
    }

    fn kernel_volume(&self) -> usize {
        self.kernel.pow(self.spatial_rank as u32)
    }

    fn kernel_dims(&self) -> Vec<usize> {
        vec![self.kernel; self.spatial_rank]
    }

    fn expand(&self, v: usize) -> [usize; 3] {
        let mut out = [1; 3];
        out[3 - self.spatial_rank..].fill(v);
        out
    }

    fn expand_zero(&self, v: usize) -> [usize; 3] {
        let mut out = [0; 3];
        out[3 - self.spatial_rank..].fill(v);
        out
    }

    fn conv_out(&self, size: usize) -> Option<usize> {
        let padded = size + 2 * self.padding;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    fn tconv_out(&self, size: usize) -> Option<usize> {
        ((size - 1) * self.stride + self.kernel).checked_sub(2 * self.padding).filter(|&s| s > 0)
    }
}

/// Geometry of a convolution from an "image" grid to an output grid.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    image: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    out: [usize; 3],
}

impl Geometry {
    fn image_len(&self) -> usize {
        self.image.iter().product()
    }

    fn out_len(&self) -> usize {
        self.out.iter().product()
    }

    fn rows(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }

    /// Visits every (column-matrix offset, image offset) pair whose kernel
    /// tap lands inside the image.
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let [id, ih, iw] = self.image;
        let [kd, kh, kw] = self.kernel;
        let [od, oh, ow] = self.out;
        let p_len = self.out_len();
        let mut row = 0;
        for c in 0..self.channels {
            let c_off = c * id * ih * iw;
            for a in 0..kd {
                for b in 0..kh {
                    for e in 0..kw {
                        let base = row * p_len;
                        let mut col = 0;
                        for z in 0..od {
                            let sz = (z * self.stride[0] + a) as isize - self.pad[0] as isize;
                            if sz < 0 || sz >= id as isize {
                                col += oh * ow;
                                continue;
                            }
                            for y in 0..oh {
                                let sy = (y * self.stride[1] + b) as isize - self.pad[1] as isize;
                                if sy < 0 || sy >= ih as isize {
                                    col += ow;
                                    continue;
                                }
                                let line = c_off + (sz as usize * ih + sy as usize) * iw;
                                for x in 0..ow {
                                    let sx = (x * self.stride[2] + e) as isize - self.pad[2] as isize;
                                    if sx >= 0 && sx < iw as isize {
                                        f(base + col, line + sx as usize);
                                    }
                                    col += 1;
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        cols.iter_mut().for_each(|v| *v = T::zero());
        self.for_each(|ci, ii| cols[ci] = image[ii]);
    }

    fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        self.for_each(|ci, ii| image[ii] += cols[ci]);
    }
}

fn check_input<T: Scalar>(kind: LayerKind, cfg: &ConvConfig, input: &DenseTensor<T>) -> Result<()> {
    let s = input.shape();
    if s.len() != cfg.spatial_rank + 2 || s[1] != cfg.in_channels {
        let mut expected = vec![s.first().copied().unwrap_or(1), cfg.in_channels];
        expected.extend(s.iter().skip(2).copied());
        expected.resize(cfg.spatial_rank + 2, 0);
        return Err(Error::shape(format!("{} input", kind.name()), &expected, s));
    }
    Ok(())
}

fn spatial_of(cfg: &ConvConfig, dims: &[usize]) -> [usize; 3] {
    let mut out = [1; 3];
    out[3 - cfg.spatial_rank..].copy_from_slice(dims);
    out
}

fn conv_kind(rank: usize, transposed: bool) -> LayerKind {
    match (rank, transposed) {
        (1, false) => LayerKind::Conv1d,
        (2, false) => LayerKind::Conv2d,
        (3, false) => LayerKind::Conv3d,
        (1, true) => LayerKind::Tconv1d,
        (2, true) => LayerKind::Tconv2d,
        _ => LayerKind::Tconv3d,
    }
}

struct ConvCache<T> {
    input: DenseTensor<T>,
    out_shape: Vec<usize>,
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], per_channel: usize) {
    for (chunk, &b) in out.chunks_mut(per_channel).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_bias_grad<T: Scalar>(grad: &[T], gb: &mut [T], per_channel: usize) {
    let channels = gb.len();
    for (i, chunk) in grad.chunks(per_channel).enumerate() {
        gb[i % channels] += chunk.iter().copied().sum::<T>();
    }
}

/// Convolution with weight `[C_out, C_in, k…]` and bias `[C_out]`.
#[derive(Debug, Clone)]
pub struct Conv<T> {
    cfg: ConvConfig,
    params: [Param<T>; 2],
}

impl<T: Scalar> Conv<T> {
    pub fn new<R: Rng + ?Sized>(cfg: ConvConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let kv = cfg.kernel_volume();
        let mut shape = vec![cfg.out_channels, cfg.in_channels];
        shape.extend(cfg.kernel_dims());
        let w = glorot(&shape, cfg.in_channels * kv, cfg.out_channels * kv, rng);
        Self::from_parts(cfg, w, DenseTensor::zeros(&[cfg.out_channels]))
    }

    pub fn from_parts(cfg: ConvConfig, weight: DenseTensor<T>, bias: DenseTensor<T>) -> Result<Self> {
        cfg.validate()?;
        let mut shape = vec![cfg.out_channels, cfg.in_channels];
        shape.extend(cfg.kernel_dims());
        weight.expect_shape("conv weight", &shape)?;
        bias.expect_shape("conv bias", &[cfg.out_channels])?;
        Ok(Self {
            cfg,
            params: [Param::new("weight", weight), Param::new("bias", bias)],
        })
    }

    pub fn config(&self) -> &ConvConfig {
        &self.cfg
    }

    fn geometry(&self, image: &[usize]) -> Result<Geometry> {
        let cfg = &self.cfg;
        let out: Vec<usize> = image
            .iter()
            .map(|&d| cfg.conv_out(d))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidInput(format!("input {image:?} smaller than kernel {}", cfg.kernel)))?;
        Ok(Geometry {
            channels: cfg.in_channels,
            image: spatial_of(cfg, image),
            kernel: cfg.expand(cfg.kernel),
            stride: cfg.expand(cfg.stride),
            pad: cfg.expand_zero(cfg.padding),
            out: spatial_of(cfg, &out),
        })
    }
}

impl<T: Scalar> Layer<T> for Conv<T> {
    fn kind(&self) -> LayerKind {
        conv_kind(self.cfg.spatial_rank, false)
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        check_input(self.kind(), &self.cfg, input)?;
        let g = self.geometry(&input.shape()[2..])?;
        let (batch, c_out) = (input.shape()[0], self.cfg.out_channels);
        let (p, rows) = (g.out_len(), g.rows());
        let mut out_shape = vec![batch, c_out];
        out_shape.extend_from_slice(&g.out[3 - self.cfg.spatial_rank..]);
        let mut out = vec![T::zero(); batch * c_out * p];
        let mut cols = vec![T::zero(); rows * p];
        let w = MatRef::new(self.params[0].value.data(), c_out, rows);
        for (x, y) in input.data().chunks(g.channels * g.image_len()).zip(out.chunks_mut(c_out * p)) {
            g.im2col(x, &mut cols);
            gemm(T::one(), w, MatRef::new(&cols, rows, p), T::zero(), y);
        }
        add_bias(&mut out, self.params[1].value.data(), p);
        Ok((
            DenseTensor::new(&out_shape, out)?,
            Cache::new(ConvCache { input: input.clone(), out_shape }),
        ))
    }

    fn backward(
        &self,
        cache: &Cache,
        grad_output: &DenseTensor<T>,
        param_grads: &mut [DenseTensor<T>],
    ) -> Result<DenseTensor<T>> {
        let c: &ConvCache<T> = cache.get(self.kind())?;
        grad_output.expect_shape(&format!("{} upstream gradient", self.kind().name()), &c.out_shape)?;
        let g = self.geometry(&c.input.shape()[2..])?;
        let c_out = self.cfg.out_channels;
        let (p, rows) = (g.out_len(), g.rows());
        let mut cols = vec![T::zero(); rows * p];
        let mut dcols = vec![T::zero(); rows * p];
        let mut dx = DenseTensor::zeros(c.input.shape());
        let w = MatRef::new(self.params[0].value.data(), c_out, rows);
        let (gw, gb) = param_grads.split_at_mut(1);
        let in_len = g.channels * g.image_len();
        for ((x, dy), dxs) in c
            .input
            .data()
            .chunks(in_len)
            .zip(grad_output.data().chunks(c_out * p))
            .zip(dx.data_mut().chunks_mut(in_len))
        {
            g.im2col(x, &mut cols);
            let dy = MatRef::new(dy, c_out, p);
            gemm(T::one(), dy, MatRef::new(&cols, rows, p).t(), T::one(), gw[0].data_mut());
            gemm(T::one(), w.t(), dy, T::zero(), &mut dcols);
            g.col2im(&dcols, dxs);
        }
        accumulate_bias_grad(grad_output.data(), gb[0].data_mut(), p);
        Ok(dx)
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

/// Transposed convolution with weight `[C_in, C_out, k…]` and bias
/// `[C_out]`; output size per axis is `(n − 1)·stride − 2·padding + kernel`.
#[derive(Debug, Clone)]
pub struct ConvTranspose<T> {
    cfg: ConvConfig,
    params: [Param<T>; 2],
}

impl<T: Scalar> ConvTranspose<T> {
    pub fn new<R: Rng + ?Sized>(cfg: ConvConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let kv = cfg.kernel_volume();
        let mut shape = vec![cfg.in_channels, cfg.out_channels];
        shape.extend(cfg.kernel_dims());
        let w = glorot(&shape, cfg.in_channels * kv, cfg.out_channels * kv, rng);
        Self::from_parts(cfg, w, DenseTensor::zeros(&[cfg.out_channels]))
    }

    pub fn from_parts(cfg: ConvConfig, weight: DenseTensor<T>, bias: DenseTensor<T>) -> Result<Self> {
        cfg.validate()?;
        let mut shape = vec![cfg.in_channels, cfg.out_channels];
        shape.extend(cfg.kernel_dims());
        weight.expect_shape("tconv weight", &shape)?;
        bias.expect_shape("tconv bias", &[cfg.out_channels])?;
        Ok(Self {
            cfg,
            params: [Param::new("weight", weight), Param::new("bias", bias)],
        })
    }

    /// Geometry of the adjoint convolution: its image is our output.
    fn geometry(&self, input: &[usize]) -> Result<Geometry> {
        let cfg = &self.cfg;
        let image: Vec<usize> = input
            .iter()
            .map(|&d| cfg.tconv_out(d))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidInput(format!("transposed conv of {input:?} is empty")))?;
        Ok(Geometry {
            channels: cfg.out_channels,
            image: spatial_of(cfg, &image),
            kernel: cfg.expand(cfg.kernel),
            stride: cfg.expand(cfg.stride),
            pad: cfg.expand_zero(cfg.padding),
            out: spatial_of(cfg, input),
        })
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose<T> {
    fn kind(&self) -> LayerKind {
        conv_kind(self.cfg.spatial_rank, true)
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        check_input(self.kind(), &self.cfg, input)?;
        let g = self.geometry(&input.shape()[2..])?;
        let (batch, c_in) = (input.shape()[0], self.cfg.in_channels);
        let (p, rows) = (g.out_len(), g.rows());
        let img = g.image_len();
        let mut out_shape = vec![batch, g.channels];
        out_shape.extend_from_slice(&g.image[3 - self.cfg.spatial_rank..]);
        let mut out = vec![T::zero(); batch * g.channels * img];
        let mut cols = vec![T::zero(); rows * p];
        let w = MatRef::new(self.params[0].value.data(), c_in, rows);
        for (x, y) in input.data().chunks(c_in * p).zip(out.chunks_mut(g.channels * img)) {
            gemm(T::one(), w.t(), MatRef::new(x, c_in, p), T::zero(), &mut cols);
            g.col2im(&cols, y);
        }
        add_bias(&mut out, self.params[1].value.data(), img);
        Ok((
            DenseTensor::new(&out_shape, out)?,
            Cache::new(ConvCache { input: input.clone(), out_shape }),
        ))
    }

    fn backward(
        &self,
        cache: &Cache,
        grad_output: &DenseTensor<T>,
        param_grads: &mut [DenseTensor<T>],
    ) -> Result<DenseTensor<T>> {
        let c: &ConvCache<T> = cache.get(self.kind())?;
        grad_output.expect_shape(&format!("{} upstream gradient", self.kind().name()), &c.out_shape)?;
        let g = self.geometry(&c.input.shape()[2..])?;
        let c_in = self.cfg.in_channels;
        let (p, rows) = (g.out_len(), g.rows());
        let img = g.image_len();
        let mut dcols = vec![T::zero(); rows * p];
        let mut dx = DenseTensor::zeros(c.input.shape());
        let w = MatRef::new(self.params[0].value.data(), c_in, rows);
        let (gw, gb) = param_grads.split_at_mut(1);
        for ((x, dy), dxs) in c
            .input
            .data()
            .chunks(c_in * p)
            .zip(grad_output.data().chunks(g.channels * img))
            .zip(dx.data_mut().chunks_mut(c_in * p))
        {
            g.im2col(dy, &mut dcols);
            let dc = MatRef::new(&dcols, rows, p);
            gemm(T::one(), w, dc, T::zero(), dxs);
            gemm(T::one(), MatRef::new(x, c_in, p), dc.t(), T::one(), gw[0].data_mut());
        }
        accumulate_bias_grad(grad_output.data(), gb[0].data_mut(), img);
        Ok(dx)
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

/// Max pooling with window 2 and stride 2 over every spatial axis. Odd
/// sizes round up; the last window is clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool {
    pub spatial_rank: usize,
}

struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPool {
    pub fn new(spatial_rank: usize) -> Self {
        Self { spatial_rank }
    }

    pub fn output_size(size: usize) -> usize {
        size.div_ceil(2)
    }
}

impl<T: Scalar> Layer<T> for MaxPool {
    fn kind(&self) -> LayerKind {
        LayerKind::Maxpool
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        let s = input.shape();
        if s.len() != self.spatial_rank + 2 {
            return Err(Error::InvalidInput(format!(
                "maxpool over {} spatial axes got shape {s:?}",
                self.spatial_rank
            )));
        }
        let mut image = [1usize; 3];
        image[3 - self.spatial_rank..].copy_from_slice(&s[2..]);
        // Leading unit axes added for lower ranks are not pooled.
        let window: [usize; 3] = std::array::from_fn(|i| if i < 3 - self.spatial_rank { 1 } else { 2 });
        let out: [usize; 3] = std::array::from_fn(|i| image[i].div_ceil(window[i]));
        let planes = s[0] * s[1];
        let in_plane = image.iter().product::<usize>();
        let out_plane = out.iter().product::<usize>();
        let mut values = Vec::with_capacity(planes * out_plane);
        let mut argmax = Vec::with_capacity(planes * out_plane);
        for plane in 0..planes {
            let base = plane * in_plane;
            for z in 0..out[0] {
                for y in 0..out[1] {
                    for x in 0..out[2] {
                        let mut best = None::<(T, usize)>;
                        for dz in 0..window[0] {
                            for dy in 0..window[1] {
                                for dx in 0..window[2] {
                                    let (iz, iy, ix) = (z * window[0] + dz, y * window[1] + dy, x * window[2] + dx);
                                    if iz >= image[0] || iy >= image[1] || ix >= image[2] {
                                        continue;
                                    }
                                    let idx = base + (iz * image[1] + iy) * image[2] + ix;
                                    let v = input.data()[idx];
                                    if best.is_none_or(|(b, _)| v > b) {
                                        best = Some((v, idx));
                                    }
                                }
                            }
                        }
                        let (v, idx) = best.expect("windows are never empty");
                        values.push(v);
                        argmax.push(idx);
                    }
                }
            }
        }
        let mut out_shape = s[..2].to_vec();
        out_shape.extend_from_slice(&out[3 - self.spatial_rank..]);
        Ok((
            DenseTensor::new(&out_shape, values)?,
            Cache::new(PoolCache { input_shape: s.to_vec(), argmax }),
        ))
    }

    fn backward(&self, cache: &Cache, grad: &DenseTensor<T>, _: &mut [DenseTensor<T>]) -> Result<DenseTensor<T>> {
        let c: &PoolCache = cache.get(LayerKind::Maxpool)?;
        if grad.len() != c.argmax.len() {
            return Err(Error::shape("maxpool upstream gradient", &[c.argmax.len()], &[grad.len()]));
        }
        let mut dx = DenseTensor::zeros(&c.input_shape);
        for (&idx, &g) in c.argmax.iter().zip(grad.data()) {
            dx.data_mut()[idx] += g;
        }
        Ok(dx)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(*self)
    }

    fn decisions(&self, cache: &Cache) -> u64 {
        cache
            .get::<PoolCache>(LayerKind::Maxpool)
            .map(|c| c.argmax.iter().fold(FNV_OFFSET, |h, &i| fnv_mix(h, i as u64)))
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn random(shape: &[usize], r: &mut ChaCha8Rng) -> DenseTensor<f64> {
        DenseTensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
    }

    #[test]
    fn unit_kernel_conv3d_is_identity() {
        let cfg = ConvConfig::same(3, 1, 1, 1);
        let conv = Conv::from_parts(cfg, DenseTensor::filled(&[1, 1, 1, 1, 1], 1.0), DenseTensor::zeros(&[1])).unwrap();
        let x = random(&[2, 1, 3, 4, 5], &mut rng());
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let cfg = ConvConfig::same(2, 1, 1, 3);
        let conv = Conv::<f64>::from_parts(cfg, DenseTensor::filled(&[1, 1, 3, 3], 1.0), DenseTensor::zeros(&[1])).unwrap();
        let x = DenseTensor::filled(&[1, 1, 5, 4], 0.7);
        let (y, _) = conv.forward(&x).unwrap();
        for i in 1..4 {
            for j in 1..3 {
                assert!((y.at(&[0, 0, i, j]) - 9.0 * 0.7).abs() < 1e-12);
            }
        }
        assert!((y.at(&[0, 0, 0, 0]) - 4.0 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_names_dims() {
        let conv = Conv::<f64>::new(ConvConfig::same(2, 3, 4, 3), &mut rng()).unwrap();
        let err = conv.forward(&DenseTensor::zeros(&[1, 2, 5, 5])).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let conv = Conv::<f64>::new(ConvConfig::same(1, 1, 1, 3), &mut rng()).unwrap();
        let mut grads = vec![DenseTensor::zeros(&[1, 1, 3]), DenseTensor::zeros(&[1])];
        let err = conv.backward(&Cache::empty(), &DenseTensor::zeros(&[1, 1, 4]), &mut grads);
        assert!(matches!(err, Err(Error::State(_))));
    }

    /// ⟨conv(x), y⟩ = ⟨x, tconv(y)⟩ for a shared kernel and no bias.
    #[test]
    fn transposed_conv_is_adjoint() {
        let mut r = rng();
        for (rank, image, cfg_of) in [
            (1usize, vec![10usize], ConvConfig::upsample2 as fn(usize, usize, usize) -> ConvConfig),
            (2, vec![8, 6], ConvConfig::upsample2),
            (3, vec![6, 4, 4], ConvConfig::upsample2),
            (2, vec![5, 7], |r, i, o| ConvConfig::same(r, i, o, 3)),
            (3, vec![3, 4, 5], |r, i, o| ConvConfig::same(r, i, o, 3)),
        ] {
            let (c_in, c_out) = (3, 2);
            let conv_cfg = cfg_of(rank, c_in, c_out);
            let t_cfg = ConvConfig { in_channels: c_out, out_channels: c_in, ..conv_cfg };
            let mut wshape = vec![c_out, c_in];
            wshape.extend(vec![conv_cfg.kernel; rank]);
            let w = random(&wshape, &mut r);
            let conv = Conv::from_parts(conv_cfg, w.clone(), DenseTensor::zeros(&[c_out])).unwrap();
            let tconv = ConvTranspose::from_parts(t_cfg, w, DenseTensor::zeros(&[c_in])).unwrap();
            let mut xs = vec![2, c_in];
            xs.extend(&image);
            let x = random(&xs, &mut r);
            let (cx, _) = conv.forward(&x).unwrap();
            let y = random(cx.shape(), &mut r);
            let (ty, _) = tconv.forward(&y).unwrap();
            assert_eq!(ty.shape(), x.shape());
            let lhs = cx.dot(&y);
            let rhs = x.dot(&ty);
            assert!((lhs - rhs).abs() < 1e-10, "rank {rank}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn upsample_doubles_sizes() {
        let t = ConvTranspose::<f64>::new(ConvConfig::upsample2(3, 2, 1), &mut rng()).unwrap();
        let (y, _) = t.forward(&DenseTensor::zeros(&[1, 2, 15, 4, 3])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 30, 8, 6]);
    }

    /// Pooling routes each gradient to the window's brute-force argmax.
    #[test]
    fn maxpool_routes_to_argmax() {
        let mut r = rng();
        for shape in [vec![1, 2, 4, 4], vec![2, 1, 3, 4], vec![1, 1, 3, 3]] {
            let x = random(&shape, &mut r);
            let pool = MaxPool::new(2);
            let (y, cache) = pool.forward(&x).unwrap();
            let (h, w) = (shape[2], shape[3]);
            let g = random(y.shape(), &mut r);
            let dx = Layer::<f64>::backward(&pool, &cache, &g, &mut []).unwrap();
            let mut expected = DenseTensor::<f64>::zeros(&shape);
            for n in 0..shape[0] {
                for c in 0..shape[1] {
                    for oy in 0..h.div_ceil(2) {
                        for ox in 0..w.div_ceil(2) {
                            let mut best = (f64::NEG_INFINITY, 0, 0);
                            for iy in 2 * oy..(2 * oy + 2).min(h) {
                                for ix in 2 * ox..(2 * ox + 2).min(w) {
                                    let v = x.at(&[n, c, iy, ix]);
                                    if v > best.0 {
                                        best = (v, iy, ix);
                                    }
                                }
                            }
                            assert_eq!(y.at(&[n, c, oy, ox]), best.0);
                            let cur = expected.at(&[n, c, best.1, best.2]);
                            expected.set(&[n, c, best.1, best.2], cur + g.at(&[n, c, oy, ox]));
                        }
                    }
                }
            }
            assert_eq!(dx, expected);
        }
    }
}
