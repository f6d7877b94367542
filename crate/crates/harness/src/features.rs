//! Turning dataset samples into model inputs and task targets.

use trajtensor_core::baselines::{handcrafted_extract, HANDCRAFTED_LEN};
use trajtensor_core::models::{single_view_mask, Family};
use trajtensor_core::{build_trajectory_tensor, CameraTrack, Error as CoreError, Task, Tensor, TrajectoryTensor};
use trajtensor_datagen::{Dataset, MctfSample};

use crate::config::RunConfig;
use crate::error::Result;

/// Which cameras the input tensor shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Multi,
    /// Every camera but the departure camera zeroed.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub cameras: usize,
    pub observed: usize,
    pub horizon: usize,
    pub grid: [usize; 2],
    pub sigma: f64,
    pub task: Task,
}

impl Encoder {
    pub fn new(cfg: &RunConfig, ds: &Dataset) -> Self {
        Self {
            cameras: ds.meta.cameras,
            observed: ds.meta.observed,
            horizon: ds.meta.horizon,
            grid: cfg.input.grid,
            sigma: cfg.input.sigma,
            task: cfg.task,
        }
    }

    /// `[k, n, w, h]`.
    pub fn tensor_input(&self, s: &MctfSample, view: View) -> Result<Tensor> {
        let z = s.input_tensor(self.cameras, self.observed, self.grid, self.sigma)?;
        Ok(match view {
            View::Multi => z.into_dense(),
            View::Single => single_view_mask(&z, s.departure_camera)?.into_dense(),
        })
    }

    /// `[n, 4]` boxes of the departure camera.
    pub fn coordinate_input(&self, s: &MctfSample) -> Tensor {
        s.coordinate_input(self.observed)
    }

    /// `[10]` hand-crafted features, or `None` with under three boxes.
    pub fn handcrafted(&self, s: &MctfSample) -> Result<Option<Tensor>> {
        match handcrafted_extract(&s.departure_boxes(self.observed)) {
            Ok(f) => Ok(Some(Tensor::new(&[HANDCRAFTED_LEN], f.to_vec())?)),
            Err(CoreError::InsufficientHistory(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn target(&self, s: &MctfSample) -> Result<Tensor> {
        Ok(s.target(self.task, self.cameras, self.horizon)?)
    }

    pub fn model_input(&self, family: Family, s: &MctfSample, view: View) -> Result<Tensor> {
        if family.is_coordinate() {
            Ok(self.coordinate_input(s))
        } else {
            self.tensor_input(s, view)
        }
    }

    /// Stacked `(inputs, targets)` for a model family.
    pub fn batch(&self, family: Family, samples: &[&MctfSample], view: View) -> Result<(Tensor, Tensor)> {
        let xs = samples
            .iter()
            .map(|s| self.model_input(family, s, view))
            .collect::<Result<Vec<_>>>()?;
        let ys = samples.iter().map(|s| self.target(s)).collect::<Result<Vec<_>>>()?;
        Ok((Tensor::stack(&xs)?, Tensor::stack(&ys)?))
    }

    /// `[k, w, h]` input frame at observed step `t`.
    pub fn frame(&self, s: &MctfSample, t: usize) -> Result<Tensor> {
        let tracks: Vec<CameraTrack> = s
            .input
            .iter()
            .map(|track| CameraTrack { camera: track.camera, boxes: vec![track.boxes[t]] })
            .collect();
        let z: TrajectoryTensor = build_trajectory_tensor(&tracks, self.cameras, 1, self.grid[0], self.grid[1], self.sigma)?;
        Ok(z.into_dense().reshape(&[self.cameras, self.grid[0], self.grid[1]])?)
    }
}
