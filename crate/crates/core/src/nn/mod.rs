//! Layers with explicit forward/backward passes, the Adam optimizer and a
//! finite-difference gradient checker.

mod adam;
mod conv;
mod gradcheck;
mod layer;
pub(crate) mod linalg;
mod loss;
mod network;
mod recurrent;
mod weights;

pub use adam::{AdamConfig, AdamState};
pub use conv::{Conv, ConvConfig, ConvTranspose, MaxPool};
pub use gradcheck::{grad_check, BlockCheck, CheckLoss, GradCheckConfig, GradCheckReport};
pub use layer::{
    sigmoid, Activation, Cache, Crop, Dense, GlobalAvgPool, LastStep, Layer, LayerKind, Param, Permute, Repeat,
    Reshape,
};
pub use loss::{bce_loss, BCE_CLAMP};
pub use network::{Grads, Sequential, Tape};
pub use recurrent::{Gru, Lstm};
pub use weights::ModelWeights;
