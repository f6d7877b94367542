//! Dataset directories: `meta` (TOML), `samples.ndrec` (one JSON record per
//! line), the camera distance file and optional `targets/*.tten` caches.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use trajtensor_core::baselines::CameraDistanceMatrix;

use crate::error::{DataError, Result};
use crate::sample::MctfSample;
use crate::scenario::ScenarioConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const META_FILE: &str = "meta";
pub const SAMPLES_FILE: &str = "samples.ndrec";
pub const TARGETS_DIR: &str = "targets";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub cameras: usize,
    pub observed: usize,
    pub horizon: usize,
    pub days: usize,
    pub sample_count: usize,
    pub distance_file: String,
    pub seed: Option<u64>,
    /// Generator configuration, absent for ingested datasets.
    pub scenario: Option<ScenarioConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub distances: CameraDistanceMatrix,
    pub samples: Vec<MctfSample>,
}

impl Dataset {
    pub fn cameras(&self) -> usize {
        self.meta.cameras
    }

    /// Distinct day tags in ascending order.
    pub fn days(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.samples.iter().map(|s| s.day).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.distances.cameras() != self.meta.cameras {
            return Err(DataError::Config("distance matrix size differs from camera count".into()));
        }
        for s in &self.samples {
            s.validate(self.meta.cameras, self.meta.observed, self.meta.horizon)?;
        }
        Ok(())
    }
}

pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>, cache_targets: bool) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta { sample_count: ds.samples.len(), ..ds.meta.clone() };
    let text = toml::to_string(&meta).map_err(|e| DataError::Config(format!("serializing meta: {e}")))?;
    fs::write(dir.join(META_FILE), text)?;
    fs::write(dir.join(&meta.distance_file), ds.distances.to_text())?;
    let mut w = BufWriter::new(fs::File::create(dir.join(SAMPLES_FILE))?);
    for s in &ds.samples {
        serde_json::to_writer(&mut w, s).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if cache_targets {
        let tdir = dir.join(TARGETS_DIR);
        fs::create_dir_all(&tdir)?;
        for s in &ds.samples {
            let t = s.targets(meta.cameras, meta.horizon)?;
            t.which.save_tten(tdir.join(format!("{:06}.which.tten", s.id)))?;
            t.when.save_tten(tdir.join(format!("{:06}.when.tten", s.id)))?;
            t.where_.save_tten(tdir.join(format!("{:06}.where.tten", s.id)))?;
        }
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path)?;
    let meta: DatasetMeta = toml::from_str(&text).map_err(|e| DataError::Parse {
        file: meta_path.display().to_string(),
        line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
        message: e.message().to_string(),
    })?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(DataError::Parse {
            file: meta_path.display().to_string(),
            line: 1,
            message: format!("schema version {} is not {SCHEMA_VERSION}", meta.schema_version),
        });
    }
    let distances = CameraDistanceMatrix::load(dir.join(&meta.distance_file))?;
    let samples_path = dir.join(SAMPLES_FILE);
    let file = samples_path.display().to_string();
    let mut samples = Vec::with_capacity(meta.sample_count);
    for (i, line) in BufReader::new(fs::File::open(&samples_path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: MctfSample = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            file: file.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        samples.push(s);
    }
    if samples.len() != meta.sample_count {
        return Err(DataError::Parse {
            file,
            line: samples.len() + 1,
            message: format!("expected {} records, found {}", meta.sample_count, samples.len()),
        });
    }
    let ds = Dataset { meta, distances, samples };
    ds.validate()?;
    Ok(ds)
}
