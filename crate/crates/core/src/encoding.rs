//! Bounding boxes, per-camera heatmaps and trajectory tensors.
//!
//! Coordinates are normalized to `[0, 1]` with the origin at the top-left
//! corner, `x` to the right and `y` downward. A heatmap cell `(gx, gy)`
//! covers `[gx/w, (gx+1)/w) × [gy/h, (gy+1)/h)` and is stored at
//! `gx * h + gy`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if ![self.x1, self.y1, self.x2, self.y2].into_iter().all(in_unit) {
            return Err(Error::InvalidInput(format!("box {self:?} leaves the unit square")));
        }
        if self.x2 <= self.x1 || self.y2 <= self.y1 {
            return Err(Error::InvalidInput(format!("box {self:?} has zero area")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

/// Per-camera sequence of boxes, `None` where the object is not visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraTrack {
    pub camera: usize,
    pub boxes: Vec<Option<BoundingBox>>,
}

impl CameraTrack {
    pub fn present(&self) -> usize {
        self.boxes.iter().filter(|b| b.is_some()).count()
    }
}

/// `w × h` grid of presence scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Scalar> Heatmap<T> {
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!("heatmap size {width}x{height}")));
        }
        Ok(Self {
            width,
            height,
            values: vec![T::zero(); width * height],
        })
    }

    pub fn from_values(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "{} values for a {width}x{height} heatmap",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::InvalidInput("heatmap values must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, gx: usize, gy: usize) -> T {
        self.values[gx * self.height + gy]
    }

    pub fn set(&mut self, gx: usize, gy: usize, v: T) {
        self.values[gx * self.height + gy] = v;
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v))
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Binary occupancy: a cell is on iff the box overlaps it with positive area.
pub fn bbox_to_heatmap<T: Scalar>(bbox: &BoundingBox, width: usize, height: usize) -> Result<Heatmap<T>> {
    bbox.validate()?;
    let mut hm = Heatmap::zeros(width, height)?;
    let xs = covered_cells(bbox.x1, bbox.x2, width);
    let ys = covered_cells(bbox.y1, bbox.y2, height);
    for gx in xs {
        for gy in ys.clone() {
            hm.set(gx, gy, T::one());
        }
    }
    Ok(hm)
}

/// Cells `g` of an `n`-cell axis with `g/n < hi` and `(g+1)/n > lo`.
fn covered_cells(lo: f64, hi: f64, n: usize) -> std::ops::Range<usize> {
    let nf = n as f64;
    let mut start = ((lo * nf).floor() as usize).saturating_sub(1);
    while start < n && (start + 1) as f64 / nf <= lo {
        start += 1;
    }
    let mut end = start;
    while end < n && (end as f64) / nf < hi {
        end += 1;
    }
    start..end
}

/// Gaussian blur with a unit-sum kernel truncated at `ceil(3σ)` cells and
/// zero padding, rescaled so the peak matches the input peak.
pub fn gaussian_smooth<T: Scalar>(hm: &Heatmap<T>, sigma: f64) -> Result<Heatmap<T>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let peak = hm.max();
    if sigma == 0.0 || peak == T::zero() {
        return Ok(hm.clone());
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<T> = kernel.iter().map(|&k| T::of(k / norm)).collect();

    let (w, h) = (hm.width as isize, hm.height as isize);
    // The square-truncated kernel is separable: blur along y, then along x.
    let mut along_y = vec![T::zero(); hm.values.len()];
    for gx in 0..w {
        for gy in 0..h {
            let mut acc = T::zero();
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = gy + ki as isize - radius;
                if (0..h).contains(&sy) {
                    acc += kv * hm.values[(gx * h + sy) as usize];
                }
            }
            along_y[(gx * h + gy) as usize] = acc;
        }
    }
    let mut out = vec![T::zero(); hm.values.len()];
    for gx in 0..w {
        for gy in 0..h {
            let mut acc = T::zero();
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = gx + ki as isize - radius;
                if (0..w).contains(&sx) {
                    acc += kv * along_y[(sx * h + gy) as usize];
                }
            }
            out[(gx * h + gy) as usize] = acc;
        }
    }
    let new_peak = out.iter().fold(T::zero(), |m, &v| m.max(v));
    let scale = peak / new_peak;
    for v in &mut out {
        *v = (*v * scale).min(T::one());
    }
    Ok(Heatmap {
        width: hm.width,
        height: hm.height,
        values: out,
    })
}

/// Value-weighted mean of cell centers in image pixels.
pub fn center_of_mass<T: Scalar>(hm: &Heatmap<T>, image_w: f64, image_h: f64) -> Result<(T, T)> {
    grid_center_of_mass(hm.values(), hm.width, hm.height, image_w, image_h)
}

/// [`center_of_mass`] over a raw `w × h` grid of non-negative weights.
pub fn grid_center_of_mass<T: Scalar>(
    values: &[T],
    width: usize,
    height: usize,
    image_w: f64,
    image_h: f64,
) -> Result<(T, T)> {
    let cell_w = image_w / width as f64;
    let cell_h = image_h / height as f64;
    let (mut mass, mut sx, mut sy) = (T::zero(), T::zero(), T::zero());
    for gx in 0..width {
        let cx = T::of((gx as f64 + 0.5) * cell_w);
        for gy in 0..height {
            let v = values[gx * height + gy];
            if v != T::zero() {
                let cy = T::of((gy as f64 + 0.5) * cell_h);
                mass += v;
                sx += v * cx;
                sy += v * cy;
            }
        }
    }
    if !(mass > T::zero()) {
        return Err(Error::UndefinedCentroid);
    }
    Ok((sx / mass, sy / mass))
}

/// Rank-4 grid of appearance scores over (camera, time, grid-x, grid-y).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTensor<T> {
    inner: DenseTensor<T>,
}

impl<T: Scalar> TrajectoryTensor<T> {
    pub fn zeros(cameras: usize, steps: usize, width: usize, height: usize) -> Self {
        Self {
            inner: DenseTensor::zeros(&[cameras, steps, width, height]),
        }
    }

    pub fn from_dense(t: DenseTensor<T>) -> Result<Self> {
        if t.rank() != 4 {
            return Err(Error::InvalidInput(format!(
                "trajectory tensor must be rank 4, got shape {:?}",
                t.shape()
            )));
        }
        if t.data().iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::InvalidInput("trajectory tensor values must lie in [0, 1]".into()));
        }
        Ok(Self { inner: t })
    }

    pub fn cameras(&self) -> usize {
        self.inner.shape()[0]
    }

    pub fn steps(&self) -> usize {
        self.inner.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.inner.shape()[2]
    }

    pub fn height(&self) -> usize {
        self.inner.shape()[3]
    }

    fn slice_range(&self, camera: usize, step: usize) -> std::ops::Range<usize> {
        let cells = self.width() * self.height();
        let start = (camera * self.steps() + step) * cells;
        start..start + cells
    }

    pub fn slice(&self, camera: usize, step: usize) -> &[T] {
        let r = self.slice_range(camera, step);
        &self.inner.data()[r]
    }

    pub fn heatmap(&self, camera: usize, step: usize) -> Heatmap<T> {
        Heatmap {
            width: self.width(),
            height: self.height(),
            values: self.slice(camera, step).to_vec(),
        }
    }

    pub fn set_heatmap(&mut self, camera: usize, step: usize, hm: &Heatmap<T>) -> Result<()> {
        if hm.width != self.width() || hm.height != self.height() {
            return Err(Error::shape(
                "set_heatmap",
                &[self.width(), self.height()],
                &[hm.width, hm.height],
            ));
        }
        let r = self.slice_range(camera, step);
        self.inner.data_mut()[r].copy_from_slice(&hm.values);
        Ok(())
    }

    pub fn camera_mass(&self, camera: usize) -> T {
        (0..self.steps())
            .flat_map(|t| self.slice(camera, t).iter().copied())
            .sum()
    }

    pub fn as_dense(&self) -> &DenseTensor<T> {
        &self.inner
    }

    pub fn into_dense(self) -> DenseTensor<T> {
        self.inner
    }

    /// Zeros every camera slice except `keep`.
    pub fn keep_single_camera(&self, keep: usize) -> Result<Self> {
        if keep >= self.cameras() {
            return Err(Error::InvalidInput(format!(
                "camera {keep} out of range for {} cameras",
                self.cameras()
            )));
        }
        let mut out = Self::zeros(self.cameras(), self.steps(), self.width(), self.height());
        let per_camera = self.steps() * self.width() * self.height();
        let r = keep * per_camera..(keep + 1) * per_camera;
        out.inner.data_mut()[r.clone()].copy_from_slice(&self.inner.data()[r]);
        Ok(out)
    }
}

/// Encodes per-camera tracks into a `k × t × w × h` tensor. Cameras without a
/// track and timesteps without a box stay all-zero (null trajectory).
pub fn build_trajectory_tensor<T: Scalar>(
    tracks: &[CameraTrack],
    cameras: usize,
    steps: usize,
    width: usize,
    height: usize,
    sigma: f64,
) -> Result<TrajectoryTensor<T>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!("heatmap size {width}x{height}")));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut z = TrajectoryTensor::zeros(cameras, steps, width, height);
    for track in tracks {
        if track.camera >= cameras {
            return Err(Error::InvalidInput(format!(
                "camera index {} outside 0..{cameras}",
                track.camera
            )));
        }
        if track.boxes.len() != steps {
            return Err(Error::shape("camera track length", &[steps], &[track.boxes.len()]));
        }
        for (step, bbox) in track.boxes.iter().enumerate() {
            if let Some(bbox) = bbox {
                let hm = gaussian_smooth(&bbox_to_heatmap::<T>(bbox, width, height)?, sigma)?;
                z.set_heatmap(track.camera, step, &hm)?;
            }
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    /// Independent oracle: intersection area of the box with each cell.
    fn oracle_cells(b: &BoundingBox, w: usize, h: usize) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for gx in 0..w {
            for gy in 0..h {
                let (cx0, cx1) = (gx as f64 / w as f64, (gx + 1) as f64 / w as f64);
                let (cy0, cy1) = (gy as f64 / h as f64, (gy + 1) as f64 / h as f64);
                let ox = (b.x2.min(cx1) - b.x1.max(cx0)).max(0.0);
                let oy = (b.y2.min(cy1) - b.y1.max(cy0)).max(0.0);
                out[gx * h + gy] = if ox * oy > 0.0 { 1.0 } else { 0.0 };
            }
        }
        out
    }

    #[test]
    fn full_frame_box_fills_every_cell() {
        let hm = bbox_to_heatmap::<f64>(&bb(0.0, 0.0, 1.0, 1.0), 4, 4).unwrap();
        assert!(hm.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn small_box_hits_one_cell() {
        let hm = bbox_to_heatmap::<f64>(&bb(0.01, 0.01, 0.2, 0.2), 4, 4).unwrap();
        assert_eq!(hm.get(0, 0), 1.0);
        assert_eq!(hm.values().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn box_spanning_four_cells() {
        let b = bb(0.0, 0.0, 0.26, 0.30);
        let hm = bbox_to_heatmap::<f64>(&b, 4, 4).unwrap();
        assert_eq!(hm.values(), oracle_cells(&b, 4, 4).as_slice());
        for (gx, gy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            assert_eq!(hm.get(gx, gy), 1.0);
        }
        assert_eq!(hm.values().iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(BoundingBox::new(0.2, 0.2, 0.2, 0.5).is_err());
        let raw = BoundingBox { x1: 0.3, y1: 0.1, x2: 0.3, y2: 0.2 };
        assert!(bbox_to_heatmap::<f64>(&raw, 4, 4).is_err());
    }

    #[test]
    fn smoothing_identity_and_zero() {
        let hm = bbox_to_heatmap::<f64>(&bb(0.1, 0.1, 0.6, 0.4), 8, 5).unwrap();
        assert_eq!(gaussian_smooth(&hm, 0.0).unwrap(), hm);
        let z = Heatmap::<f64>::zeros(6, 6).unwrap();
        assert_eq!(gaussian_smooth(&z, 2.0).unwrap(), z);
        assert!(gaussian_smooth(&hm, -1.0).is_err());
    }

    #[test]
    fn smoothing_single_cell_matches_kernel() {
        let mut hm = Heatmap::<f64>::zeros(9, 9).unwrap();
        hm.set(4, 4, 1.0);
        let s = gaussian_smooth(&hm, 1.0).unwrap();
        assert!((s.get(4, 4) - 1.0).abs() < 1e-12);
        let n = (-0.5f64).exp();
        for (x, y) in [(3, 4), (5, 4), (4, 3), (4, 5)] {
            assert!((s.get(x, y) - n).abs() < 1e-12, "{}", s.get(x, y));
        }
        assert!((s.get(3, 3) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn centroid_examples() {
        let uniform = Heatmap::<f64>::from_values(16, 9, vec![1.0; 144]).unwrap();
        assert_eq!(center_of_mass(&uniform, 1920.0, 1080.0).unwrap(), (960.0, 540.0));

        let mut one = Heatmap::<f64>::zeros(16, 9).unwrap();
        one.set(0, 0, 1.0);
        assert_eq!(center_of_mass(&one, 1920.0, 1080.0).unwrap(), (60.0, 60.0));

        let mut weights = vec![0.0f64; 144];
        weights[0] = 1.0;
        weights[4 * 9] = 3.0;
        assert_eq!(grid_center_of_mass(&weights, 16, 9, 1920.0, 1080.0).unwrap(), (420.0, 60.0));

        let zero = Heatmap::<f64>::zeros(16, 9).unwrap();
        assert!(matches!(center_of_mass(&zero, 1920.0, 1080.0), Err(Error::UndefinedCentroid)));
    }

    #[test]
    fn null_and_single_slice_tensors() {
        let empty: TrajectoryTensor<f64> = build_trajectory_tensor(&[], 3, 4, 4, 4, 1.0).unwrap();
        assert!(empty.as_dense().data().iter().all(|&v| v == 0.0));

        let b = bb(0.1, 0.1, 0.4, 0.5);
        let mut boxes = vec![None; 4];
        boxes[1] = Some(b);
        let tracks = [CameraTrack { camera: 1, boxes }];
        let z: TrajectoryTensor<f64> = build_trajectory_tensor(&tracks, 3, 4, 4, 4, 0.0).unwrap();
        let expected = bbox_to_heatmap::<f64>(&b, 4, 4).unwrap();
        for c in 0..3 {
            for t in 0..4 {
                if (c, t) == (1, 1) {
                    assert_eq!(z.slice(c, t), expected.values());
                } else {
                    assert!(z.slice(c, t).iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn overlapping_views_encode_identically() {
        let b = bb(0.3, 0.2, 0.5, 0.9);
        let track = |camera| CameraTrack { camera, boxes: vec![Some(b), None] };
        let z: TrajectoryTensor<f64> =
            build_trajectory_tensor(&[track(0), track(2)], 3, 2, 16, 9, 1.5).unwrap();
        assert_eq!(z.slice(0, 0), z.slice(2, 0));
        assert!(z.slice(0, 0).iter().any(|&v| v > 0.0));
        assert!(z.slice(1, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn camera_out_of_range_rejected() {
        let tracks = [CameraTrack { camera: 3, boxes: vec![None] }];
        assert!(build_trajectory_tensor::<f64>(&tracks, 3, 1, 4, 4, 0.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..0.95f64, 0.0..0.95f64, 0.01..1.0f64, 0.01..1.0f64).prop_map(|(x, y, dw, dh)| {
            BoundingBox {
                x1: x,
                y1: y,
                x2: (x + dw * (1.0 - x)).clamp(x + 1e-6, 1.0),
                y2: (y + dh * (1.0 - y)).clamp(y + 1e-6, 1.0),
            }
        })
    }

    proptest! {
        #[test]
        fn heatmap_matches_geometric_oracle(b in arb_box(), w in 1usize..50, h in 1usize..30) {
            let hm = bbox_to_heatmap::<f64>(&b, w, h).unwrap();
            let oracle = oracle_cells(&b, w, h);
            prop_assert_eq!(hm.values(), oracle.as_slice());
        }

        #[test]
        fn smoothing_keeps_peak_and_range(b in arb_box(), sigma in 0.0..4.0f64) {
            let hm = bbox_to_heatmap::<f64>(&b, 16, 9).unwrap();
            let s = gaussian_smooth(&hm, sigma).unwrap();
            prop_assert!(s.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best });
            // The smoothed peak lies on a cell the box covered.
            prop_assert_eq!(hm.values()[argmax(s.values())], 1.0);
            prop_assert!((s.max() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn centroid_scale_invariant(vals in proptest::collection::vec(0.0..1.0f64, 20), alpha in 0.05..1.0f64) {
            prop_assume!(vals.iter().sum::<f64>() > 1e-3);
            let a = Heatmap::from_values(5, 4, vals.clone()).unwrap();
            let b = Heatmap::from_values(5, 4, vals.iter().map(|v| v * alpha).collect()).unwrap();
            let (ax, ay) = center_of_mass(&a, 1920.0, 1080.0).unwrap();
            let (bx, by) = center_of_mass(&b, 1920.0, 1080.0).unwrap();
            prop_assert!((ax - bx).abs() < 1e-9 && (ay - by).abs() < 1e-9);
        }

        #[test]
        fn camera_permutation_permutes_slices(b0 in arb_box(), b1 in arb_box(), b2 in arb_box()) {
            let boxes = [b0, b1, b2];
            let perm = [2usize, 0, 1];
            let tracks: Vec<_> = (0..3).map(|c| CameraTrack { camera: c, boxes: vec![Some(boxes[c]), None] }).collect();
            let permuted: Vec<_> = (0..3).map(|c| CameraTrack { camera: perm[c], boxes: vec![Some(boxes[c]), None] }).collect();
            let z: TrajectoryTensor<f64> = build_trajectory_tensor(&tracks, 3, 2, 8, 6, 1.0).unwrap();
            let zp: TrajectoryTensor<f64> = build_trajectory_tensor(&permuted, 3, 2, 8, 6, 1.0).unwrap();
            for c in 0..3 {
                prop_assert_eq!(z.slice(c, 0), zp.slice(perm[c], 0));
            }
        }
    }
}
