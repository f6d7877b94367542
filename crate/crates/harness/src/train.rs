//! Mini-batch BCE training with Adam, validation-based model selection and
//! early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajtensor_core::models::{soft_bce_loss, train_step};
use trajtensor_core::nn::{bce_loss, AdamConfig, AdamState, ModelWeights, Sequential};
use trajtensor_core::{average_precision, Error as CoreError, Tensor};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Stop as soon as an epoch's mean training loss falls below this.
    pub stop_below: Option<f64>,
    pub seed: u64,
}

impl TrainOptions {
    pub fn from_config(cfg: &RunConfig, seed: u64) -> Self {
        Self {
            learning_rate: cfg.learning_rate(),
            batch_size: cfg.train.batch_size,
            max_epochs: cfg.train.max_epochs,
            patience: cfg.train.patience,
            stop_below: None,
            seed,
        }
    }
}

/// How the returned weights were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Best validation AP.
    ValidationAp,
    /// Lowest validation loss; the validation split had no positive label.
    ValidationLoss,
    /// No validation split: the last epoch.
    FinalEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub selection: Selection,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

impl TrainLog {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.history.last().map(|e| e.train_loss)
    }
}

/// Produces stacked `(inputs, targets)` for a list of example indices.
pub type BatchFn<'a> = dyn Fn(&[usize]) -> Result<(Tensor, Tensor)> + 'a;

fn diverged(e: CoreError, epoch: usize, batch: usize) -> HarnessError {
    match e {
        CoreError::State(detail) => HarnessError::Diverged { epoch, batch, detail },
        other => other.into(),
    }
}

/// Trains `net` on the `train` examples. When `val` is non-empty the
/// weights of the best validation epoch are restored at the end.
pub fn fit(
    net: &mut Sequential<f64>,
    opts: &TrainOptions,
    train: &[usize],
    val: &[usize],
    batch: &BatchFn<'_>,
) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(HarnessError::Data("no training examples".into()));
    }
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(opts.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order = train.to_vec();
    let val_batches: Vec<(Tensor, Tensor)> = val
        .chunks(opts.batch_size)
        .map(batch)
        .collect::<Result<_>>()?;
    let val_has_positive = val_batches.iter().any(|(_, y)| y.data().iter().any(|&v| v > 0.0));
    let selection = match (val.is_empty(), val_has_positive) {
        (true, _) => Selection::FinalEpoch,
        (false, true) => Selection::ValidationAp,
        (false, false) => Selection::ValidationLoss,
    };

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelWeights)> = None;
    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let (x, y) = batch(chunk)?;
            let loss = train_step(net, &mut adam, &x, &y).map_err(|e| diverged(e, epoch, b))?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let mut log = EpochLog { epoch, train_loss, val_loss: None, val_ap: None };
        if selection != Selection::FinalEpoch {
            let (loss, ap) = validate(net, &val_batches)?;
            log.val_loss = Some(loss);
            log.val_ap = ap;
            let score = match selection {
                Selection::ValidationAp => ap.unwrap_or(f64::NEG_INFINITY),
                _ => -loss,
            };
            if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
                best = Some((score, epoch, ModelWeights::from_network(net)));
            }
        }
        history.push(log);
        log::debug!("epoch {epoch}: train loss {train_loss:.5}");
        if opts.stop_below.is_some_and(|t| train_loss < t) {
            break;
        }
        if let Some((_, at, _)) = &best {
            if epoch - at >= opts.patience {
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, weights)) => {
            weights.apply_to(net)?;
            epoch
        }
        None => history.len(),
    };
    Ok(TrainLog { selection, best_epoch, history })
}

/// Mean BCE and pooled AP over validation batches.
fn validate(net: &Sequential<f64>, batches: &[(Tensor, Tensor)]) -> Result<(f64, Option<f64>)> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut loss = 0.0;
    let mut count = 0;
    for (x, y) in batches {
        let p = net.infer(x)?;
        let (l, _) = bce_loss(&p, y)?;
        loss += l * p.len() as f64;
        count += p.len();
        scores.extend_from_slice(p.data());
        labels.extend(y.data().iter().map(|&v| v > 0.0));
    }
    let ap = match average_precision(&scores, &labels) {
        Ok(ap) => Some(ap),
        Err(CoreError::NoPositives) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((loss / count as f64, ap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub epochs: usize,
    pub losses: Vec<f64>,
}

/// Trains a reconstruction network until the epoch loss has not improved
/// for `patience` epochs (or `max_epochs`).
pub fn pretrain_reconstruction(
    net: &mut Sequential<f64>,
    opts: &TrainOptions,
    count: usize,
    frames: &dyn Fn(&[usize]) -> Result<Tensor>,
) -> Result<PretrainLog> {
    if count == 0 {
        return Err(HarnessError::Data("no frames to pretrain on".into()));
    }
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(opts.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..count).collect();
    let mut losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut since = 0;
    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let x = frames(chunk)?;
            let (pred, tape) = net.forward(&x)?;
            let (loss, dy) = soft_bce_loss(&pred, &x)?;
            if !loss.is_finite() {
                return Err(HarnessError::Diverged { epoch, batch: b, detail: format!("reconstruction loss {loss}") });
            }
            let (_, grads) = net.backward(&tape, &dy)?;
            adam.update(net.params_mut().map(|(_, p)| p), &grads.blocks)?;
            total += loss * chunk.len() as f64;
        }
        let loss = total / count as f64;
        losses.push(loss);
        if loss < best {
            best = loss;
            since = 0;
        } else {
            since += 1;
            if since >= opts.patience {
                break;
            }
        }
    }
    Ok(PretrainLog { epochs: losses.len(), losses })
}
