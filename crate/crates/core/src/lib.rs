//! Trajectory tensors for multi-camera trajectory forecasting.
//!
//! The numerical core is generic over the scalar type ([`Scalar`] is
//! implemented for `f32` and `f64`); training and evaluation use the `f64`
//! aliases exported here, files on disk hold `f32`.

pub mod baselines;
pub mod encoding;
pub mod error;
pub mod gradsuite;
pub mod metrics;
pub mod models;
pub mod nn;
mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use encoding::{
    bbox_to_heatmap, build_trajectory_tensor, center_of_mass, gaussian_smooth, grid_center_of_mass, BoundingBox,
    CameraTrack,
};
pub use metrics::{
    average_precision, displacement_errors, pr_curve, siou_when, siou_where, MetricsReport, PrCurve, Task,
    TaskMetrics,
};

pub type Tensor = tensor::DenseTensor<f64>;
pub type Tensor32 = tensor::DenseTensor<f32>;
pub type Heatmap = encoding::Heatmap<f64>;
pub type TrajectoryTensor = encoding::TrajectoryTensor<f64>;
pub type Network = nn::Sequential<f64>;
