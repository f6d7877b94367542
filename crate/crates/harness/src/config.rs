//! Run configuration: TOML with nested sections, hashed for report names.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trajtensor_core::models::{Family, ModelSpec};
use trajtensor_core::Task;
use trajtensor_datagen::ScenarioConfig;

use crate::error::{HarnessError, Result};

/// The three supported input heatmap sizes.
pub const HEATMAP_GRIDS: [[usize; 2]; 3] = [[16, 9], [32, 18], [48, 27]];
pub const MAX_SIGMA: f64 = 4.0;

/// A learned model family or one of the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Model(Family),
    ShortestDistance,
    Mean,
    MostSimilar,
    Handcrafted,
}

impl Method {
    pub const BASELINES: [Method; 4] = [Method::ShortestDistance, Method::Mean, Method::MostSimilar, Method::Handcrafted];

    pub fn family(self) -> Option<Family> {
        match self {
            Method::Model(f) => Some(f),
            _ => None,
        }
    }

    /// Methods whose fitted state is a set of network weights.
    pub fn has_weights(self) -> bool {
        matches!(self, Method::Model(_) | Method::Handcrafted)
    }

    /// One model per departure camera.
    pub fn per_camera(self) -> bool {
        match self {
            Method::Model(f) => f.is_coordinate(),
            Method::Handcrafted => true,
            _ => false,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Model(family) => write!(f, "{family}"),
            Method::ShortestDistance => f.write_str("shortest_distance"),
            Method::Mean => f.write_str("mean"),
            Method::MostSimilar => f.write_str("most_similar"),
            Method::Handcrafted => f.write_str("handcrafted"),
        }
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(m) = Method::BASELINES.into_iter().find(|m| m.to_string() == s) {
            return Ok(m);
        }
        s.parse::<Family>()
            .map(Method::Model)
            .map_err(|_| HarnessError::Config(format!("unknown method {s:?}")))
    }
}

impl TryFrom<String> for Method {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub grid: [usize; 2],
    /// Gaussian smoothing of input heatmaps, in cells.
    pub sigma: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { grid: [16, 9], sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Defaults to the family rate (1e-3 coordinate, 1e-4 tensor).
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Share of the training samples held out for model selection.
    pub validation_fraction: f64,
    /// CNN-GRU autoencoder: stop after this many epochs without improvement.
    pub pretrain_patience: usize,
    pub pretrain_max_epochs: usize,
    pub handcrafted_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            pretrain_patience: 5,
            pretrain_max_epochs: 200,
            handcrafted_hidden: 64,
        }
    }
}

/// Optional architecture overrides on top of the family defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub channels: Option<Vec<usize>>,
    pub temporal_channels: Option<Vec<usize>>,
    pub feature: Option<usize>,
    pub hidden: Option<usize>,
    pub frame_code: Option<usize>,
    pub decoder_channels: Option<usize>,
    pub latent_channels: Option<usize>,
}

impl ModelOverrides {
    pub fn apply(&self, spec: &mut ModelSpec) {
        if let Some(v) = &self.channels {
            spec.channels = v.clone();
        }
        if let Some(v) = &self.temporal_channels {
            spec.temporal_channels = v.clone();
        }
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut spec.feature, self.feature);
        set(&mut spec.hidden, self.hidden);
        set(&mut spec.frame_code, self.frame_code);
        set(&mut spec.decoder_channels, self.decoder_channels);
        set(&mut spec.latent_channels, self.latent_channels);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalConfig {
    pub folds: usize,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self { folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grids: Vec<[usize; 2]>,
    pub sigmas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grids: HEATMAP_GRIDS.to_vec(),
            sigmas: vec![0.0, 1.0, 2.0, 3.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiTargetConfig {
    /// Departure-time bin in timesteps (2 s at 5 Hz).
    pub bin_steps: usize,
}

impl Default for MultiTargetConfig {
    fn default() -> Self {
        Self { bin_steps: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dataset")]
    pub dataset: PathBuf,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub crossval: CrossvalConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub multi_target: MultiTargetConfig,
    /// Scenario for `datagen`; the built-in default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
}

fn default_dataset() -> PathBuf {
    PathBuf::from("data")
}

fn default_method() -> Method {
    Method::Model(Family::Cnn3d)
}

fn default_task() -> Task {
    Task::Which
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `{method}_{task}_{hash}`, the stem of every output file of this run.
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.method, self.task, self.hash())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        check_grid(self.input.grid)?;
        check_sigma(self.input.sigma)?;
        for &g in &self.sweep.grids {
            check_grid(g)?;
        }
        for &s in &self.sweep.sigmas {
            check_sigma(s)?;
        }
        let t = &self.train;
        if t.batch_size == 0 || t.max_epochs == 0 || t.pretrain_max_epochs == 0 || t.handcrafted_hidden == 0 {
            return bad("batch size, epoch limits and hidden width must be positive".into());
        }
        if let Some(lr) = t.learning_rate {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("learning rate {lr} must be finite and non-negative"));
            }
        }
        if !(0.0..1.0).contains(&t.validation_fraction) {
            return bad(format!("validation fraction {} must lie in [0, 1)", t.validation_fraction));
        }
        if self.crossval.folds < 2 {
            return bad("cross-validation needs at least 2 folds".into());
        }
        if self.multi_target.bin_steps == 0 {
            return bad("multi-target bin must be positive".into());
        }
        if self.method == Method::ShortestDistance && self.task != Task::Which {
            return bad("the shortest-distance baseline only predicts which".into());
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        self.train.learning_rate.unwrap_or_else(|| match self.method {
            Method::Model(f) => f.default_learning_rate(),
            _ => 1e-3,
        })
    }

    /// Model spec for a dataset shape; `None` for baselines.
    pub fn model_spec(&self, cameras: usize, observed: usize, horizon: usize) -> Result<Option<ModelSpec>> {
        let Some(family) = self.method.family() else { return Ok(None) };
        let mut spec = ModelSpec::new(family, self.task, cameras);
        spec.observed = observed;
        spec.horizon = horizon;
        spec.grid = self.input.grid;
        self.model.apply(&mut spec);
        spec.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(Some(spec))
    }
}

fn check_grid(grid: [usize; 2]) -> Result<()> {
    if HEATMAP_GRIDS.contains(&grid) {
        Ok(())
    } else {
        Err(HarnessError::Config(format!(
            "heatmap grid {}x{} is not one of 16x9, 32x18, 48x27",
            grid[0], grid[1]
        )))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if (0.0..=MAX_SIGMA).contains(&sigma) {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("sigma {sigma} outside [0, 4]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_scenario_fills_from_defaults() {
        let cfg = RunConfig::from_toml("[scenario]\nsteps_per_day = 300\n").unwrap();
        let scenario = cfg.scenario.unwrap();
        assert_eq!(scenario.steps_per_day, 300);
        assert_eq!(scenario.cameras.len(), 5);
    }

    #[test]
    fn hash_tracks_sigma() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.input.sigma = 2.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn rejects_out_of_range_settings() {
        for text in [
            "[input]\ngrid = [20, 10]",
            "[input]\nsigma = 4.5",
            "[input]\nsigma = -1.0",
            "[train]\nbatch_size = 0",
            "method = \"shortest_distance\"\ntask = \"when\"",
            "method = \"transformer\"",
            "unknown_key = 1",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(HarnessError::Config(_))), "{text}");
        }
    }

    #[test]
    fn method_names() {
        for m in Method::BASELINES {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("cnn_gru".parse::<Method>().unwrap(), Method::Model(Family::CnnGru));
    }

    #[test]
    fn learning_rate_defaults_follow_family() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.learning_rate(), 1e-4);
        cfg.method = Method::Model(Family::Gru);
        assert_eq!(cfg.learning_rate(), 1e-3);
    }
}
