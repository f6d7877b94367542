//! Synthetic camera-network scenarios and the on-disk dataset format.
//!
//! Agents walk a corridor graph at 5 Hz; every time one leaves a camera's
//! view and shows up again (in any camera) within the forecast horizon, a
//! sample is emitted with the preceding observation window and the future
//! tracks from which Which/When/Where targets are derived.

mod dataset;
mod error;
mod multi;
mod sample;
mod scenario;
mod simulate;

pub use dataset::{load_dataset, save_dataset, Dataset, DatasetMeta, SAMPLES_FILE, SCHEMA_VERSION, TARGETS_DIR};
pub use error::{DataError, Result};
pub use multi::group_multi_target;
pub use sample::{MctfSample, Targets, TARGET_GRID};
pub use scenario::{jitter_box, CameraModel, Node, Rect, ScenarioConfig, ScriptedAgent, ViewAxis};
pub use simulate::{departures, generate_samples, observe, simulate_paths, AgentPath};

/// Simulates `config` and packages the samples with the camera distances.
pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    let samples = generate_samples(config, seed)?;
    Ok(Dataset {
        meta: DatasetMeta {
            schema_version: SCHEMA_VERSION,
            cameras: config.cameras.len(),
            observed: config.observed,
            horizon: config.horizon,
            days: config.days,
            sample_count: samples.len(),
            distance_file: "distances.txt".into(),
            seed: Some(seed),
            scenario: Some(config.clone()),
        },
        distances: config.distance_matrix(),
        samples,
    })
}
