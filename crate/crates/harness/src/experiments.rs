//! Evaluation, day-split cross-validation, the grid × σ sweep and the
//! single-view ablation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use trajtensor_core::metrics::{FoldReport, PredictionTarget, TaskAccumulator};
use trajtensor_core::{Error as CoreError, MetricsReport};
use trajtensor_datagen::{Dataset, MctfSample};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::features::{Encoder, View};
use crate::fitting::{fit_fold, load_fold, FoldFit, Fitted};
use crate::folds::FoldPlan;

/// PR curves are thinned to at most this many points in reports.
pub const CURVE_POINTS: usize = 1000;

pub fn fold_plan(cfg: &RunConfig, ds: &Dataset) -> Result<FoldPlan> {
    FoldPlan::new(&ds.days(), cfg.crossval.folds, cfg.seed)
}

/// Scores `samples` with a fitted method and pools the task metrics.
pub fn evaluate(fitted: &Fitted, enc: &Encoder, samples: &[&MctfSample], fold: usize, view: View) -> Result<FoldReport> {
    let mut report = FoldReport {
        fold,
        test_samples: samples.len(),
        metrics: Default::default(),
        skipped: None,
        pr_curve: Default::default(),
    };
    if samples.is_empty() {
        report.skipped = Some("no test samples".into());
        return Ok(report);
    }
    let mut acc = TaskAccumulator::new(enc.task);
    for chunk in samples.chunks(64) {
        let preds = fitted.predict(enc, chunk, view)?;
        for (s, p) in chunk.iter().zip(preds) {
            let target = PredictionTarget::new(enc.task, p, enc.target(s)?)?;
            acc.push(&target)?;
        }
    }
    match acc.finish() {
        Ok((metrics, curve)) => {
            report.metrics = metrics;
            report.pr_curve = curve.thinned(CURVE_POINTS);
        }
        Err(CoreError::NoPositives) => report.skipped = Some("no positive labels".into()),
        Err(e) => return Err(e.into()),
    }
    Ok(report)
}

fn split(plan: &FoldPlan, ds: &Dataset, fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (train, test) = plan.split(&ds.samples, fold);
    if train.is_empty() || test.is_empty() {
        return Err(HarnessError::Fold {
            fold,
            message: format!("{} training and {} test samples", train.len(), test.len()),
        });
    }
    Ok((train, test))
}

fn test_refs<'a>(ds: &'a Dataset, idx: &[usize]) -> Vec<&'a MctfSample> {
    idx.iter().map(|&i| &ds.samples[i]).collect()
}

/// Fits the configured method on the training days of every fold.
pub fn train_folds(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<FoldFit>> {
    let plan = fold_plan(cfg, ds)?;
    (0..plan.folds())
        .map(|f| {
            let (train, _) = split(&plan, ds, f)?;
            log::info!("fold {f}: fitting {} on {} samples", cfg.method, train.len());
            fit_fold(cfg, ds, f, &train)
        })
        .collect()
}

/// Loads the per-fold fits written by a previous `train` run.
pub fn load_folds(cfg: &RunConfig, ds: &Dataset, dir: &Path) -> Result<Vec<Fitted>> {
    let plan = fold_plan(cfg, ds)?;
    (0..plan.folds())
        .map(|f| {
            let (train, _) = split(&plan, ds, f)?;
            load_fold(cfg, ds, f, &train, dir)
        })
        .collect()
}

/// Evaluates per-fold fits on their test days.
pub fn evaluate_folds(cfg: &RunConfig, ds: &Dataset, fits: &[&Fitted], view: View) -> Result<MetricsReport> {
    let plan = fold_plan(cfg, ds)?;
    let enc = Encoder::new(cfg, ds);
    let mut reports = Vec::with_capacity(fits.len());
    for (f, fitted) in fits.iter().enumerate() {
        let (_, test) = split(&plan, ds, f)?;
        reports.push(evaluate(fitted, &enc, &test_refs(ds, &test), f, view)?);
    }
    let method = match view {
        View::Multi => cfg.method.to_string(),
        View::Single => format!("{}/single_view", cfg.method),
    };
    Ok(MetricsReport::from_folds(method, cfg.task, reports))
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub fits: Vec<FoldFit>,
    pub report: MetricsReport,
}

/// Trains and evaluates every fold; each day is tested exactly once.
pub fn cross_validate(cfg: &RunConfig, ds: &Dataset) -> Result<CrossValidation> {
    let fits = train_folds(cfg, ds)?;
    let refs: Vec<&Fitted> = fits.iter().map(|f| &f.fitted).collect();
    let report = evaluate_folds(cfg, ds, &refs, View::Multi)?;
    Ok(CrossValidation { fits, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    pub report: MetricsReport,
}

/// One cross-validation per (grid, σ) cell, grid-major.
pub fn sweep(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &grid in &cfg.sweep.grids {
        for &sigma in &cfg.sweep.sigmas {
            let mut cell = cfg.clone();
            cell.input.grid = grid;
            cell.input.sigma = sigma;
            log::info!("sweep cell {}x{} sigma {sigma}", grid[0], grid[1]);
            let cv = cross_validate(&cell, ds)?;
            rows.push(SweepRow { width: grid[0], height: grid[1], sigma, report: cv.report });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("width,height,sigma,ap_mean");
    let folds = rows.first().map_or(0, |r| r.report.folds.len());
    for f in 0..folds {
        out.push_str(&format!(",ap_fold{f}"));
    }
    out.push('\n');
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
    for r in rows {
        let task = r.report.task;
        out.push_str(&format!("{},{},{},{}", r.width, r.height, r.sigma, fmt(r.report.mean.ap(task))));
        for f in &r.report.folds {
            out.push_str(&format!(",{}", fmt(f.metrics.ap(task))));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub multi_view: MetricsReport,
    pub single_view: MetricsReport,
}

/// Evaluates the same per-fold weights on full and single-view inputs.
pub fn ablate_single_view(cfg: &RunConfig, ds: &Dataset, fits: &[&Fitted]) -> Result<Ablation> {
    Ok(Ablation {
        multi_view: evaluate_folds(cfg, ds, fits, View::Multi)?,
        single_view: evaluate_folds(cfg, ds, fits, View::Single)?,
    })
}
