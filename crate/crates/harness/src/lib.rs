//! Experiment orchestration for trajtensor: configs, day-split folds,
//! training, evaluation, sweeps, ablations, multi-target prediction and
//! report files.

pub mod config;
pub mod error;
pub mod experiments;
pub mod features;
pub mod fitting;
pub mod folds;
pub mod multi;
pub mod report;
pub mod train;

pub use config::{Method, RunConfig, HEATMAP_GRIDS};
pub use error::{HarnessError, Result};
pub use experiments::{
    ablate_single_view, cross_validate, evaluate, evaluate_folds, fold_plan, load_folds, sweep, train_folds,
    Ablation, CrossValidation, SweepRow,
};
pub use features::{Encoder, View};
pub use fitting::{fit_fold, FoldFit, Fitted};
pub use folds::FoldPlan;
pub use multi::{predict_multi_target, stacked_predict};
pub use report::{summarize, ReportWriter};
pub use train::{fit, TrainLog, TrainOptions};
