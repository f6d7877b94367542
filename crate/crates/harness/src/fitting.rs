//! Fitting every method on one fold's training samples, prediction, and
//! weight files.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajtensor_core::baselines::{
    handcrafted_classifier, shortest_distance_predict, CameraDistanceMatrix, MeanBaseline, MostSimilarBaseline,
};
use trajtensor_core::models::{build_frame_autoencoder, transfer_frame_encoder, Family, ModelRegistry, ModelSpec};
use trajtensor_core::nn::{ModelWeights, Sequential};
use trajtensor_core::Tensor;
use trajtensor_datagen::{Dataset, MctfSample};

use crate::config::{Method, RunConfig};
use crate::error::{HarnessError, Result};
use crate::features::{Encoder, View};
use crate::folds::validation_split;
use crate::train::{fit, pretrain_reconstruction, PretrainLog, TrainLog, TrainOptions};

/// A method fitted on one fold.
#[derive(Debug, Clone)]
pub enum Fitted {
    /// Learned models; `trained[c]` is false for per-camera models whose
    /// camera had no training departures (served by `fallback`).
    Network { registry: ModelRegistry, trained: Vec<bool>, fallback: MeanBaseline },
    Mean(MeanBaseline),
    ShortestDistance(CameraDistanceMatrix),
    MostSimilar(MostSimilarBaseline),
    /// Per-camera classifiers over hand-crafted features.
    Handcrafted { nets: Vec<Option<Sequential<f64>>>, fallback: MeanBaseline, output_shape: Vec<usize> },
    /// Scores equal to the ground truth; a pipeline sanity check.
    Oracle,
    /// The same score everywhere.
    Constant(f64),
}

/// Training record of one fold, written next to the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldLog {
    pub fold: usize,
    pub train_samples: usize,
    /// `(model name, log)`: `model` for tensor families, `camera{c}` otherwise.
    pub models: Vec<(String, TrainLog)>,
    pub pretrain: Option<PretrainLog>,
    pub fallbacks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FoldFit {
    pub fold: usize,
    pub fitted: Fitted,
    pub log: FoldLog,
}

fn refs<'a>(ds: &'a Dataset, idx: &[usize]) -> Vec<&'a MctfSample> {
    idx.iter().map(|&i| &ds.samples[i]).collect()
}

fn mean_baseline(enc: &Encoder, samples: &[&MctfSample]) -> Result<MeanBaseline> {
    let targets = samples.iter().map(|s| enc.target(s)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = samples.iter().zip(&targets).map(|(s, t)| (s.departure_camera, t)).collect();
    Ok(MeanBaseline::fit(enc.cameras, &pairs)?)
}

/// Seed stream of one fold: everything random in a fold draws from it in a
/// fixed order.
pub fn fold_rng(seed: u64, fold: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64 + 1);
    rng
}

pub fn model_spec(cfg: &RunConfig, ds: &Dataset) -> Result<Option<ModelSpec>> {
    cfg.model_spec(ds.meta.cameras, ds.meta.observed, ds.meta.horizon)
}

/// Fits `cfg.method` on the `train` samples of `fold`.
pub fn fit_fold(cfg: &RunConfig, ds: &Dataset, fold: usize, train: &[usize]) -> Result<FoldFit> {
    if train.is_empty() {
        return Err(HarnessError::Fold { fold, message: "no training samples".into() });
    }
    let enc = Encoder::new(cfg, ds);
    let samples = refs(ds, train);
    let mut rng = fold_rng(cfg.seed, fold);
    let mut log = FoldLog { fold, train_samples: train.len(), ..Default::default() };
    let fitted = match cfg.method {
        Method::Mean => Fitted::Mean(mean_baseline(&enc, &samples)?),
        Method::ShortestDistance => Fitted::ShortestDistance(ds.distances.clone()),
        Method::MostSimilar => {
            let tracks: Vec<Tensor> = samples.iter().map(|s| enc.coordinate_input(s)).collect();
            let targets = samples.iter().map(|s| enc.target(s)).collect::<Result<Vec<_>>>()?;
            let triples: Vec<_> = samples
                .iter()
                .zip(tracks.iter().zip(&targets))
                .map(|(s, (x, y))| (s.departure_camera, x, y))
                .collect();
            Fitted::MostSimilar(MostSimilarBaseline::fit(enc.cameras, &triples)?)
        }
        Method::Handcrafted => fit_handcrafted(cfg, &enc, &samples, &mut rng, &mut log)?,
        Method::Model(family) => {
            let spec = model_spec(cfg, ds)?.expect("model methods have a spec");
            fit_network(cfg, &enc, &spec, family, &samples, &mut rng, &mut log)?
        }
    };
    Ok(FoldFit { fold, fitted, log })
}

fn fit_network(
    cfg: &RunConfig,
    enc: &Encoder,
    spec: &ModelSpec,
    family: Family,
    samples: &[&MctfSample],
    rng: &mut ChaCha8Rng,
    log: &mut FoldLog,
) -> Result<Fitted> {
    let mut registry = ModelRegistry::new(spec, rng)?;
    let fallback = mean_baseline(enc, samples)?;
    let groups: Vec<(String, Vec<usize>)> = if family.is_coordinate() {
        (0..enc.cameras)
            .map(|c| {
                let mine = (0..samples.len()).filter(|&i| samples[i].departure_camera == c).collect();
                (format!("camera{c}"), mine)
            })
            .collect()
    } else {
        vec![("model".to_string(), (0..samples.len()).collect())]
    };
    let mut trained = vec![true; registry.weight_sets()];
    for (slot, (name, idx)) in groups.into_iter().enumerate() {
        if idx.is_empty() {
            log::warn!("fold {}: no training departures from camera {slot}; using the mean baseline", log.fold);
            trained[slot] = false;
            log.fallbacks.push(slot);
            continue;
        }
        let (fit_idx, val_idx) = validation_split(&idx, cfg.train.validation_fraction, rng.gen());
        let net = &mut registry.models[slot].net;
        if family == Family::CnnGru {
            let mut ae = build_frame_autoencoder(spec, rng)?;
            let n = enc.observed;
            let frames = |chunk: &[usize]| -> Result<Tensor> {
                let fs = chunk
                    .iter()
                    .map(|&f| enc.frame(samples[fit_idx[f / n]], f % n))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Tensor::stack(&fs)?)
            };
            let opts = TrainOptions {
                max_epochs: cfg.train.pretrain_max_epochs,
                patience: cfg.train.pretrain_patience,
                ..TrainOptions::from_config(cfg, rng.gen())
            };
            let pre = pretrain_reconstruction(&mut ae, &opts, fit_idx.len() * n, &frames)?;
            transfer_frame_encoder(&ae, net)?;
            log.pretrain = Some(pre);
        }
        let batch = |chunk: &[usize]| {
            let picked: Vec<&MctfSample> = chunk.iter().map(|&i| samples[i]).collect();
            enc.batch(family, &picked, View::Multi)
        };
        let opts = TrainOptions::from_config(cfg, rng.gen());
        let train_log = fit(net, &opts, &fit_idx, &val_idx, &batch)?;
        log.models.push((name, train_log));
    }
    Ok(Fitted::Network { registry, trained, fallback })
}

fn fit_handcrafted(
    cfg: &RunConfig,
    enc: &Encoder,
    samples: &[&MctfSample],
    rng: &mut ChaCha8Rng,
    log: &mut FoldLog,
) -> Result<Fitted> {
    let fallback = mean_baseline(enc, samples)?;
    let output_shape = enc.target(samples[0])?.shape().to_vec();
    let outputs: usize = output_shape.iter().product();
    let features = samples.iter().map(|s| enc.handcrafted(s)).collect::<Result<Vec<_>>>()?;
    let mut nets = Vec::with_capacity(enc.cameras);
    for c in 0..enc.cameras {
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].departure_camera == c && features[i].is_some())
            .collect();
        let mut net = handcrafted_classifier(cfg.train.handcrafted_hidden, outputs, rng);
        if idx.is_empty() {
            log::warn!("fold {}: no usable departures from camera {c}; using the mean baseline", log.fold);
            log.fallbacks.push(c);
            nets.push(None);
            continue;
        }
        let (fit_idx, val_idx) = validation_split(&idx, cfg.train.validation_fraction, rng.gen());
        let batch = |chunk: &[usize]| -> Result<(Tensor, Tensor)> {
            let xs: Vec<Tensor> = chunk.iter().map(|&i| features[i].clone().expect("filtered")).collect();
            let ys = chunk
                .iter()
                .map(|&i| Ok(enc.target(samples[i])?.reshape(&[outputs])?))
                .collect::<Result<Vec<_>>>()?;
            Ok((Tensor::stack(&xs)?, Tensor::stack(&ys)?))
        };
        let opts = TrainOptions::from_config(cfg, rng.gen());
        let train_log = fit(&mut net, &opts, &fit_idx, &val_idx, &batch)?;
        log.models.push((format!("camera{c}"), train_log));
        nets.push(Some(net));
    }
    Ok(Fitted::Handcrafted { nets, fallback, output_shape })
}

impl Fitted {
    /// Task-shaped scores for each sample, in order.
    pub fn predict(&self, enc: &Encoder, samples: &[&MctfSample], view: View) -> Result<Vec<Tensor>> {
        match self {
            Fitted::Oracle => samples.iter().map(|s| enc.target(s)).collect(),
            Fitted::Constant(v) => samples.iter().map(|s| Ok(enc.target(s)?.map(|_| *v))).collect(),
            Fitted::Mean(m) => Ok(samples.iter().map(|s| m.predict(s.departure_camera).clone()).collect()),
            Fitted::ShortestDistance(matrix) => samples
                .iter()
                .map(|s| {
                    let scores = shortest_distance_predict(matrix, s.departure_camera)?;
                    Ok(Tensor::new(&[scores.len()], scores)?)
                })
                .collect(),
            Fitted::MostSimilar(b) => samples
                .iter()
                .map(|s| Ok(b.predict(s.departure_camera, &enc.coordinate_input(s))?.0.clone()))
                .collect(),
            Fitted::Handcrafted { nets, fallback, output_shape } => samples
                .iter()
                .map(|s| {
                    let c = s.departure_camera;
                    match (&nets[c], enc.handcrafted(s)?) {
                        (Some(net), Some(f)) => {
                            let y = net.infer(&f.reshape(&[1, trajtensor_core::baselines::HANDCRAFTED_LEN])?)?;
                            Ok(y.reshape(output_shape)?)
                        }
                        _ => Ok(fallback.predict(c).clone()),
                    }
                })
                .collect(),
            Fitted::Network { registry, trained, fallback } => {
                let family = registry.spec.family;
                let mut out = Vec::with_capacity(samples.len());
                if family.is_coordinate() {
                    for s in samples {
                        let c = s.departure_camera;
                        if !trained[c] {
                            out.push(fallback.predict(c).clone());
                            continue;
                        }
                        let x = enc.coordinate_input(s);
                        let x = x.reshape(&[1, enc.observed, 4])?;
                        out.push(registry.for_camera(c)?.predict(&x)?.index_outer(0));
                    }
                } else {
                    let model = &registry.models[0];
                    for chunk in samples.chunks(64) {
                        let xs = chunk.iter().map(|s| enc.tensor_input(s, view)).collect::<Result<Vec<_>>>()?;
                        let y = model.predict(&Tensor::stack(&xs)?)?;
                        out.extend((0..chunk.len()).map(|i| y.index_outer(i)));
                    }
                }
                Ok(out)
            }
        }
    }

    /// Weight files of this fit as `(suffix, weights)`, e.g. `("cam2", …)`.
    pub fn weight_sets(&self) -> Vec<(String, ModelWeights)> {
        match self {
            Fitted::Network { registry, trained, .. } => {
                if registry.spec.family.is_coordinate() {
                    (0..registry.models.len())
                        .filter(|&c| trained[c])
                        .map(|c| (format!("cam{c}"), registry.models[c].weights()))
                        .collect()
                } else {
                    vec![("model".to_string(), registry.models[0].weights())]
                }
            }
            Fitted::Handcrafted { nets, .. } => nets
                .iter()
                .enumerate()
                .filter_map(|(c, n)| n.as_ref().map(|n| (format!("cam{c}"), ModelWeights::from_network(n))))
                .collect(),
            _ => Vec::new(),
        }
    }
}

pub fn weight_path(dir: &Path, stem: &str, fold: usize, suffix: &str) -> std::path::PathBuf {
    dir.join(format!("{stem}.fold{fold}.{suffix}.ttwt"))
}

/// Rebuilds a fit from weight files written by [`save_fold_weights`]. The
/// mean fallback and the weight-free baselines are refitted, which is exact
/// because fitting them is deterministic.
pub fn load_fold(cfg: &RunConfig, ds: &Dataset, fold: usize, train: &[usize], dir: &Path) -> Result<Fitted> {
    let enc = Encoder::new(cfg, ds);
    let samples = refs(ds, train);
    if samples.is_empty() {
        return Err(HarnessError::Fold { fold, message: "no training samples".into() });
    }
    let stem = cfg.stem();
    let read = |suffix: &str| -> Result<Option<ModelWeights>> {
        let path = weight_path(dir, &stem, fold, suffix);
        if !path.exists() {
            return Ok(None);
        }
        ModelWeights::load(&path).map(Some).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
    };
    let apply = |w: &ModelWeights, net: &mut Sequential<f64>| {
        w.apply_to(net).map_err(|e| HarnessError::Data(format!("weights do not match the configured model: {e}")))
    };
    match cfg.method {
        Method::Model(family) => {
            let spec = model_spec(cfg, ds)?.expect("model methods have a spec");
            let mut registry = ModelRegistry::new(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
            let mut trained = vec![false; registry.weight_sets()];
            for (slot, model) in registry.models.iter_mut().enumerate() {
                let suffix = if family.is_coordinate() { format!("cam{slot}") } else { "model".into() };
                if let Some(w) = read(&suffix)? {
                    apply(&w, &mut model.net)?;
                    trained[slot] = true;
                }
            }
            if !family.is_coordinate() && !trained[0] {
                let path = weight_path(dir, &stem, fold, "model");
                return Err(HarnessError::Data(format!("missing weights {}", path.display())));
            }
            Ok(Fitted::Network { registry, trained, fallback: mean_baseline(&enc, &samples)? })
        }
        Method::Handcrafted => {
            let output_shape = enc.target(samples[0])?.shape().to_vec();
            let outputs: usize = output_shape.iter().product();
            let mut nets = Vec::new();
            for c in 0..enc.cameras {
                nets.push(match read(&format!("cam{c}"))? {
                    Some(w) => {
                        let mut net = handcrafted_classifier(cfg.train.handcrafted_hidden, outputs, &mut ChaCha8Rng::seed_from_u64(0));
                        apply(&w, &mut net)?;
                        Some(net)
                    }
                    None => None,
                });
            }
            Ok(Fitted::Handcrafted { nets, fallback: mean_baseline(&enc, &samples)?, output_shape })
        }
        _ => Ok(fit_fold(cfg, ds, fold, train)?.fitted),
    }
}

pub fn save_fold_weights(fit: &FoldFit, stem: &str, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (suffix, w) in fit.fitted.weight_sets() {
        w.save(weight_path(dir, stem, fit.fold, &suffix))?;
    }
    Ok(())
}

/// The registry model for tensor families, used by multi-target prediction.
pub fn tensor_model(fitted: &Fitted) -> Option<&trajtensor_core::models::Model> {
    match fitted {
        Fitted::Network { registry, .. } if !registry.spec.family.is_coordinate() => registry.models.first(),
        _ => None,
    }
}
