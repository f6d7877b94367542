//! Forecasting samples and their Which/When/Where targets.

use serde::{Deserialize, Serialize};
use trajtensor_core::models::coordinate_input;
use trajtensor_core::{build_trajectory_tensor, BoundingBox, CameraTrack, Task, Tensor, TrajectoryTensor};

use crate::error::{DataError, Result};

/// Target grid of the where task.
pub const TARGET_GRID: [usize; 2] = [16, 9];

/// One departure event. `input` covers the `n` steps ending at the
/// departure step, `future` the `m` steps after it; both list only cameras
/// with at least one box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctfSample {
    pub id: usize,
    pub day: usize,
    pub agent: usize,
    /// Absolute step within the day.
    pub departure_step: usize,
    pub departure_camera: usize,
    pub input: Vec<CameraTrack>,
    pub future: Vec<CameraTrack>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub which: Tensor,
    pub when: Tensor,
    pub where_: Tensor,
}

impl Targets {
    pub fn get(&self, task: Task) -> &Tensor {
        match task {
            Task::Which => &self.which,
            Task::When => &self.when,
            Task::Where => &self.where_,
        }
    }
}

impl MctfSample {
    pub fn observed(&self) -> usize {
        self.input.first().map_or(0, |t| t.boxes.len())
    }

    pub fn horizon(&self) -> usize {
        self.future.first().map_or(0, |t| t.boxes.len())
    }

    pub fn validate(&self, cameras: usize, observed: usize, horizon: usize) -> Result<()> {
        let bad = |m: String| Err(DataError::Config(format!("sample {}: {m}", self.id)));
        if self.departure_camera >= cameras {
            return bad(format!("departure camera {} out of range", self.departure_camera));
        }
        for (tracks, len) in [(&self.input, observed), (&self.future, horizon)] {
            for t in tracks {
                if t.camera >= cameras || t.boxes.len() != len {
                    return bad(format!("track for camera {} has {} steps, expected {len}", t.camera, t.boxes.len()));
                }
                for b in t.boxes.iter().flatten() {
                    b.validate()?;
                }
            }
        }
        if !self.future.iter().any(|t| t.present() > 0) {
            return bad("no future appearance".into());
        }
        if self.departure_boxes(observed).iter().all(Option::is_none) {
            return bad("no input box in the departure camera".into());
        }
        Ok(())
    }

    fn dense(tracks: &[CameraTrack], camera: usize, len: usize) -> Vec<Option<BoundingBox>> {
        tracks
            .iter()
            .find(|t| t.camera == camera)
            .map_or_else(|| vec![None; len], |t| t.boxes.clone())
    }

    pub fn input_boxes(&self, camera: usize, observed: usize) -> Vec<Option<BoundingBox>> {
        Self::dense(&self.input, camera, observed)
    }

    pub fn departure_boxes(&self, observed: usize) -> Vec<Option<BoundingBox>> {
        self.input_boxes(self.departure_camera, observed)
    }

    /// `[n, 4]` departure-camera track for coordinate models.
    pub fn coordinate_input(&self, observed: usize) -> Tensor {
        coordinate_input(&self.departure_boxes(observed))
    }

    /// `k × n × w × h` input trajectory tensor.
    pub fn input_tensor(&self, cameras: usize, observed: usize, grid: [usize; 2], sigma: f64) -> Result<TrajectoryTensor> {
        Ok(build_trajectory_tensor(&self.input, cameras, observed, grid[0], grid[1], sigma)?)
    }

    /// Ground truth from the future tracks: where is the unsmoothed 16×9
    /// encoding, when and which its any-reductions.
    pub fn targets(&self, cameras: usize, horizon: usize) -> Result<Targets> {
        let [w, h] = TARGET_GRID;
        let z: TrajectoryTensor = build_trajectory_tensor(&self.future, cameras, horizon, w, h, 0.0)?;
        let mut when = Tensor::zeros(&[cameras, horizon]);
        for c in 0..cameras {
            for t in 0..horizon {
                if z.slice(c, t).iter().any(|&v| v > 0.0) {
                    when.set(&[c, t], 1.0);
                }
            }
        }
        let which = Tensor::from_fn(&[cameras], |c| {
            if (0..horizon).any(|t| when.at(&[c, t]) > 0.0) {
                1.0
            } else {
                0.0
            }
        });
        Ok(Targets { which, when, where_: z.into_dense() })
    }

    pub fn target(&self, task: Task, cameras: usize, horizon: usize) -> Result<Tensor> {
        let t = self.targets(cameras, horizon)?;
        Ok(match task {
            Task::Which => t.which,
            Task::When => t.when,
            Task::Where => t.where_,
        })
    }
}
