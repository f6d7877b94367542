//! Evaluation metrics for the Which/When/Where tasks.
//!
//! Average precision is a step sum over distinct score thresholds, pooled
//! over every element of a task (micro-average). The soft
//! intersection-over-union scores measure how much predicted mass falls on
//! ground-truth-positive timesteps or cells; `C+`, `T+(c)` and `G+(c,t)` are
//! always taken from the ground truth. Displacement errors compare heatmap
//! centroids in a nominal 1920×1080 image.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::encoding::grid_center_of_mass;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

pub const IMAGE_WIDTH: f64 = 1920.0;
pub const IMAGE_HEIGHT: f64 = 1080.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Which,
    When,
    Where,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Which, Task::When, Task::Where];

    pub fn name(self) -> &'static str {
        match self {
            Task::Which => "which",
            Task::When => "when",
            Task::Where => "where",
        }
    }

    /// Target shape for `k` cameras, horizon `m` and a `w × h` grid.
    pub fn target_shape(self, k: usize, m: usize, w: usize, h: usize) -> Vec<usize> {
        match self {
            Task::Which => vec![k],
            Task::When => vec![k, m],
            Task::Where => vec![k, m, w, h],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "which" => Ok(Task::Which),
            "when" => Ok(Task::When),
            "where" => Ok(Task::Where),
            other => Err(Error::InvalidInput(format!("unknown task {other:?}"))),
        }
    }
}

/// Scores and binary ground truth for one sample of one task.
#[derive(Debug, Clone)]
pub struct PredictionTarget<T> {
    task: Task,
    scores: DenseTensor<T>,
    truth: DenseTensor<T>,
}

impl<T: Scalar> PredictionTarget<T> {
    pub fn new(task: Task, scores: DenseTensor<T>, truth: DenseTensor<T>) -> Result<Self> {
        let rank = match task {
            Task::Which => 1,
            Task::When => 2,
            Task::Where => 4,
        };
        if truth.rank() != rank {
            return Err(Error::InvalidInput(format!(
                "{task} targets are rank {rank}, got shape {:?}",
                truth.shape()
            )));
        }
        scores.expect_shape("prediction scores", truth.shape())?;
        if scores.data().iter().any(|s| !(*s >= T::zero() && *s <= T::one())) {
            return Err(Error::InvalidInput("scores must lie in [0, 1]".into()));
        }
        if truth.data().iter().any(|&y| y != T::zero() && y != T::one()) {
            return Err(Error::InvalidInput("ground truth must be binary".into()));
        }
        Ok(Self { task, scores, truth })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn scores(&self) -> &DenseTensor<T> {
        &self.scores
    }

    pub fn truth(&self) -> &DenseTensor<T> {
        &self.truth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall at each distinct threshold, thresholds descending.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Keeps at most `max_points` evenly spaced points (always the last).
    pub fn thinned(&self, max_points: usize) -> PrCurve {
        let n = self.points.len();
        if n <= max_points || max_points < 2 {
            return self.clone();
        }
        let mut points: Vec<PrPoint> = (0..max_points - 1)
            .map(|i| self.points[i * (n - 1) / (max_points - 1)])
            .collect();
        points.push(self.points[n - 1]);
        PrCurve { points }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall);
        }
        out
    }
}

fn check_scores<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores vs labels", &[labels.len()], &[scores.len()]));
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty score list".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    Ok(positives)
}

/// Walks distinct thresholds in descending order, yielding cumulative
/// (threshold, true positives, false positives) after each tie group.
fn threshold_sweep<T: Scalar>(scores: &[T], labels: &[bool]) -> Vec<(T, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

/// Non-interpolated average precision: `Σ ΔRecall · Precision` over
/// distinct thresholds, tied scores forming a single threshold.
pub fn average_precision<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    let positives = check_scores(scores, labels)?;
    let total = T::of(positives as f64);
    let mut ap = T::zero();
    let mut prev_tp = 0;
    for (_, tp, fp) in threshold_sweep(scores, labels) {
        if tp > prev_tp {
            let delta_recall = T::of((tp - prev_tp) as f64) / total;
            let precision = T::of(tp as f64) / T::of((tp + fp) as f64);
            ap += delta_recall * precision;
            prev_tp = tp;
        }
    }
    Ok(ap)
}

pub fn pr_curve<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<PrCurve> {
    let positives = check_scores(scores, labels)? as f64;
    let points = threshold_sweep(scores, labels)
        .into_iter()
        .map(|(s, tp, fp)| PrPoint {
            threshold: s.as_f64(),
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives,
        })
        .collect();
    Ok(PrCurve { points })
}

fn ratio<T: Scalar>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

fn expect_binary_pair<T: Scalar>(
    context: &str,
    pred: &DenseTensor<T>,
    gt: &DenseTensor<T>,
    rank: usize,
) -> Result<()> {
    if gt.rank() != rank {
        return Err(Error::InvalidInput(format!(
            "{context}: ground truth must be rank {rank}, got {:?}",
            gt.shape()
        )));
    }
    pred.expect_shape(context, gt.shape())
}

/// Mean over ground-truth-positive cameras of the share of predicted mass
/// that lands on ground-truth-positive timesteps. `pred` and `gt` are `k×m`.
pub fn siou_when<T: Scalar>(pred: &DenseTensor<T>, gt: &DenseTensor<T>) -> Result<T> {
    expect_binary_pair("siou_when", pred, gt, 2)?;
    let m = gt.shape()[1];
    let mut total = T::zero();
    let mut positive_cameras = 0usize;
    for (p_row, g_row) in pred.data().chunks(m).zip(gt.data().chunks(m)) {
        if !g_row.iter().any(|&g| g > T::zero()) {
            continue;
        }
        positive_cameras += 1;
        let (mut hit, mut all) = (T::zero(), T::zero());
        for (&p, &g) in p_row.iter().zip(g_row) {
            all += p;
            if g > T::zero() {
                hit += p;
            }
        }
        total += ratio(hit, all);
    }
    if positive_cameras == 0 {
        return Err(Error::NoPositives);
    }
    Ok(total / T::of(positive_cameras as f64))
}

/// Spatial analogue of [`siou_when`] over `k×m×w×h` tensors: per positive
/// (camera, timestep) the share of predicted mass on positive cells,
/// averaged over timesteps, then cameras.
pub fn siou_where<T: Scalar>(pred: &DenseTensor<T>, gt: &DenseTensor<T>) -> Result<T> {
    expect_binary_pair("siou_where", pred, gt, 4)?;
    let s = gt.shape();
    let (m, cells) = (s[1], s[2] * s[3]);
    let mut total = T::zero();
    let mut positive_cameras = 0usize;
    for (p_cam, g_cam) in pred.data().chunks(m * cells).zip(gt.data().chunks(m * cells)) {
        let mut cam_total = T::zero();
        let mut positive_steps = 0usize;
        for (p, g) in p_cam.chunks(cells).zip(g_cam.chunks(cells)) {
            if !g.iter().any(|&v| v > T::zero()) {
                continue;
            }
            positive_steps += 1;
            let (mut hit, mut all) = (T::zero(), T::zero());
            for (&pv, &gv) in p.iter().zip(g) {
                all += pv;
                if gv > T::zero() {
                    hit += pv;
                }
            }
            cam_total += ratio(hit, all);
        }
        if positive_steps > 0 {
            positive_cameras += 1;
            total += cam_total / T::of(positive_steps as f64);
        }
    }
    if positive_cameras == 0 {
        return Err(Error::NoPositives);
    }
    Ok(total / T::of(positive_cameras as f64))
}

/// Average and final displacement between predicted and ground-truth
/// centroids, in pixels of an `image_w × image_h` frame. Prediction slices
/// without mass are charged the image diagonal.
pub fn displacement_errors<T: Scalar>(
    pred: &DenseTensor<T>,
    gt: &DenseTensor<T>,
    image_w: f64,
    image_h: f64,
) -> Result<(T, T)> {
    expect_binary_pair("displacement_errors", pred, gt, 4)?;
    let s = gt.shape();
    let (m, w, h) = (s[1], s[2], s[3]);
    let cells = w * h;
    let diagonal = T::of(image_w.hypot(image_h));
    let (mut ade_sum, mut fde_sum) = (T::zero(), T::zero());
    let mut positive_cameras = 0usize;
    for (p_cam, g_cam) in pred.data().chunks(m * cells).zip(gt.data().chunks(m * cells)) {
        let mut distances = Vec::new();
        for (p, g) in p_cam.chunks(cells).zip(g_cam.chunks(cells)) {
            let Ok((gx, gy)) = grid_center_of_mass(g, w, h, image_w, image_h) else {
                continue;
            };
            let d = match grid_center_of_mass(p, w, h, image_w, image_h) {
                Ok((px, py)) => (px - gx).hypot(py - gy),
                Err(_) => diagonal,
            };
            distances.push(d);
        }
        if let Some(&last) = distances.last() {
            positive_cameras += 1;
            ade_sum += distances.iter().copied().sum::<T>() / T::of(distances.len() as f64);
            fde_sum += last;
        }
    }
    if positive_cameras == 0 {
        return Err(Error::NoPositives);
    }
    let n = T::of(positive_cameras as f64);
    Ok((ade_sum / n, fde_sum / n))
}

/// Metric values for one fold (or their mean). Absent entries do not apply
/// to the task or could not be computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub ap_which: Option<f64>,
    pub ap_when: Option<f64>,
    pub ap_where: Option<f64>,
    pub siou_when: Option<f64>,
    pub siou_where: Option<f64>,
    pub ade_where: Option<f64>,
    pub fde_where: Option<f64>,
}

impl TaskMetrics {
    pub fn ap(&self, task: Task) -> Option<f64> {
        match task {
            Task::Which => self.ap_which,
            Task::When => self.ap_when,
            Task::Where => self.ap_where,
        }
    }

    fn fields(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("ap_which", self.ap_which),
            ("ap_when", self.ap_when),
            ("ap_where", self.ap_where),
            ("siou_when", self.siou_when),
            ("siou_where", self.siou_where),
            ("ade_where", self.ade_where),
            ("fde_where", self.fde_where),
        ]
    }

    fn fields_mut(&mut self) -> [&mut Option<f64>; 7] {
        [
            &mut self.ap_which,
            &mut self.ap_when,
            &mut self.ap_where,
            &mut self.siou_when,
            &mut self.siou_where,
            &mut self.ade_where,
            &mut self.fde_where,
        ]
    }

    /// Field-wise mean over the entries where the value is present.
    pub fn mean_of(items: &[&TaskMetrics]) -> TaskMetrics {
        let mut out = TaskMetrics::default();
        for (i, slot) in out.fields_mut().into_iter().enumerate() {
            let values: Vec<f64> = items.iter().filter_map(|m| m.fields()[i].1).collect();
            if !values.is_empty() {
                *slot = Some(values.iter().sum::<f64>() / values.len() as f64);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_samples: usize,
    pub metrics: TaskMetrics,
    /// Reason the fold produced no metrics, e.g. no positive labels.
    pub skipped: Option<String>,
    #[serde(default)]
    pub pr_curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub task: Task,
    pub folds: Vec<FoldReport>,
    pub mean: TaskMetrics,
}

impl MetricsReport {
    pub fn from_folds(method: impl Into<String>, task: Task, folds: Vec<FoldReport>) -> Self {
        let used: Vec<&TaskMetrics> = folds
            .iter()
            .filter(|f| f.skipped.is_none())
            .map(|f| &f.metrics)
            .collect();
        let mean = TaskMetrics::mean_of(&used);
        Self {
            method: method.into(),
            task,
            folds,
            mean,
        }
    }

    /// Line-delimited `key = value` rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method = {}", self.method);
        let _ = writeln!(out, "task = {}", self.task);
        for fold in &self.folds {
            let _ = writeln!(out, "fold.{}.test_samples = {}", fold.fold, fold.test_samples);
            if let Some(reason) = &fold.skipped {
                let _ = writeln!(out, "fold.{}.skipped = {reason}", fold.fold);
            }
            for (key, value) in fold.metrics.fields() {
                if let Some(v) = value {
                    let _ = writeln!(out, "fold.{}.{key} = {v:.6}", fold.fold);
                }
            }
        }
        for (key, value) in self.mean.fields() {
            if let Some(v) = value {
                let _ = writeln!(out, "mean.{key} = {v:.6}");
            }
        }
        out
    }
}

/// Serial accumulator for one fold of one task.
#[derive(Debug, Clone)]
pub struct TaskAccumulator<T> {
    task: Task,
    scores: Vec<T>,
    labels: Vec<bool>,
    siou: Vec<T>,
    ade: Vec<T>,
    fde: Vec<T>,
    samples: usize,
}

impl<T: Scalar> TaskAccumulator<T> {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            scores: Vec::new(),
            labels: Vec::new(),
            siou: Vec::new(),
            ade: Vec::new(),
            fde: Vec::new(),
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn push(&mut self, target: &PredictionTarget<T>) -> Result<()> {
        if target.task != self.task {
            return Err(Error::InvalidInput(format!(
                "accumulating {} targets into a {} accumulator",
                target.task, self.task
            )));
        }
        let (pred, gt) = (&target.scores, &target.truth);
        self.scores.extend_from_slice(pred.data());
        self.labels.extend(gt.data().iter().map(|&v| v > T::zero()));
        self.samples += 1;
        let per_sample = match self.task {
            Task::Which => Ok(()),
            Task::When => siou_when(pred, gt).map(|s| self.siou.push(s)),
            Task::Where => siou_where(pred, gt).and_then(|s| {
                self.siou.push(s);
                let (a, f) = displacement_errors(pred, gt, IMAGE_WIDTH, IMAGE_HEIGHT)?;
                self.ade.push(a);
                self.fde.push(f);
                Ok(())
            }),
        };
        match per_sample {
            Err(Error::NoPositives) | Ok(()) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Pooled metrics plus the PR curve for this fold.
    pub fn finish(&self) -> Result<(TaskMetrics, PrCurve)> {
        if self.scores.is_empty() {
            return Err(Error::InvalidInput("no samples accumulated".into()));
        }
        let ap = average_precision(&self.scores, &self.labels)?.as_f64();
        let curve = pr_curve(&self.scores, &self.labels)?;
        let mean = |v: &[T]| (!v.is_empty()).then(|| v.iter().map(|x| x.as_f64()).sum::<f64>() / v.len() as f64);
        let mut m = TaskMetrics::default();
        match self.task {
            Task::Which => m.ap_which = Some(ap),
            Task::When => {
                m.ap_when = Some(ap);
                m.siou_when = mean(&self.siou);
            }
            Task::Where => {
                m.ap_where = Some(ap);
                m.siou_where = mean(&self.siou);
                m.ade_where = mean(&self.ade);
                m.fde_where = mean(&self.fde);
            }
        }
        Ok((m, curve))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force: recount precision and recall from scratch at every
    /// distinct threshold.
    pub(crate) fn brute_force_ap(scores: &[f64], labels: &[bool]) -> f64 {
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let positives = labels.iter().filter(|&&l| l).count() as f64;
        let mut prev_recall = 0.0;
        let mut ap = 0.0;
        for t in thresholds {
            let tp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l).count() as f64;
            let predicted = scores.iter().filter(|&&s| s >= t).count() as f64;
            let recall = tp / positives;
            ap += (recall - prev_recall) * (tp / predicted);
            prev_recall = recall;
        }
        ap
    }

    fn t2(rows: usize, cols: usize, v: Vec<f64>) -> DenseTensor<f64> {
        DenseTensor::new(&[rows, cols], v).unwrap()
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.2], &[true, false]).unwrap(), 1.0);
        let ap: f64 = average_precision(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert!((brute_force_ap(&[0.9, 0.8, 0.1], &[true, false, true]) - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert!(matches!(average_precision(&[0.3, 0.2], &[false, false]), Err(Error::NoPositives)));
    }

    #[test]
    fn pr_curve_examples() {
        let c = pr_curve(&[0.9, 0.1], &[true, false]).unwrap();
        assert_eq!(
            c.points,
            vec![
                PrPoint { threshold: 0.9, precision: 1.0, recall: 1.0 },
                PrPoint { threshold: 0.1, precision: 0.5, recall: 1.0 },
            ]
        );
        let all_pos = pr_curve(&[0.3, 0.7, 0.5], &[true, true, true]).unwrap();
        assert!(all_pos.points.iter().all(|p| p.precision == 1.0));
        assert!(matches!(pr_curve::<f64>(&[], &[]), Err(Error::InvalidInput(_))));
        assert!(c.to_csv().starts_with("threshold,precision,recall\n0.9,1,1\n"));
    }

    #[test]
    fn siou_when_examples() {
        let gt = t2(2, 4, vec![0., 0., 1., 1., 0., 0., 0., 0.]);
        assert_eq!(siou_when(&gt, &gt).unwrap(), 1.0);
        let pred = t2(2, 4, vec![0.2, 0.2, 0.8, 0.8, 0.9, 0.1, 0.3, 0.3]);
        assert!((siou_when(&pred, &gt).unwrap() - 0.8).abs() < 1e-12);

        let mut g = vec![0.0; 60];
        g[10..25].iter_mut().for_each(|v| *v = 1.0);
        let gt = t2(1, 60, g);
        let pred = t2(1, 60, vec![0.37; 60]);
        assert!((siou_when(&pred, &gt).unwrap() - 0.25).abs() < 1e-12);

        let none = t2(1, 4, vec![0.0; 4]);
        assert!(matches!(siou_when(&none, &none), Err(Error::NoPositives)));
    }

    #[test]
    fn siou_where_examples() {
        let mut gt = DenseTensor::<f64>::zeros(&[1, 1, 2, 2]);
        gt.data_mut()[0] = 1.0;
        gt.data_mut()[1] = 1.0;
        assert_eq!(siou_where(&gt, &gt).unwrap(), 1.0);
        let pred = DenseTensor::new(&[1, 1, 2, 2], vec![0.5, 0.25, 0.25, 0.0]).unwrap();
        assert!((siou_where(&pred, &gt).unwrap() - 0.75).abs() < 1e-12);

        let mut gt = DenseTensor::<f64>::zeros(&[2, 3, 16, 9]);
        for i in 0..6 {
            gt.set(&[1, 2, i, 4], 1.0);
        }
        let pred = DenseTensor::filled(&[2, 3, 16, 9], 0.4);
        assert!((siou_where(&pred, &gt).unwrap() - 6.0 / 144.0).abs() < 1e-12);
    }

    #[test]
    fn displacement_examples() {
        let mut gt = DenseTensor::<f64>::zeros(&[1, 2, 16, 9]);
        gt.set(&[0, 0, 3, 4], 1.0);
        gt.set(&[0, 1, 3, 4], 1.0);
        assert_eq!(displacement_errors(&gt, &gt, IMAGE_WIDTH, IMAGE_HEIGHT).unwrap(), (0.0, 0.0));

        let mut shifted = DenseTensor::<f64>::zeros(&[1, 2, 16, 9]);
        shifted.set(&[0, 0, 4, 4], 1.0);
        shifted.set(&[0, 1, 4, 4], 1.0);
        assert_eq!(
            displacement_errors(&shifted, &gt, IMAGE_WIDTH, IMAGE_HEIGHT).unwrap(),
            (120.0, 120.0)
        );

        let blank = DenseTensor::<f64>::zeros(&[1, 2, 16, 9]);
        let (ade, fde) = displacement_errors(&blank, &gt, IMAGE_WIDTH, IMAGE_HEIGHT).unwrap();
        let diag = (1920.0f64 * 1920.0 + 1080.0 * 1080.0).sqrt();
        assert_eq!((ade, fde), (diag, diag));
        assert!((diag - 2202.9).abs() < 0.05);
    }

    #[test]
    fn report_mean_and_text() {
        let fold = |i, ap| FoldReport {
            fold: i,
            test_samples: 10,
            metrics: TaskMetrics { ap_which: Some(ap), ..Default::default() },
            skipped: None,
            pr_curve: PrCurve::default(),
        };
        let r = MetricsReport::from_folds("mean", Task::Which, vec![fold(0, 0.5), fold(1, 0.7)]);
        assert!((r.mean.ap_which.unwrap() - 0.6).abs() < 1e-12);
        let text = r.to_text();
        assert!(text.contains("fold.1.ap_which = 0.700000"));
        assert!(text.contains("mean.ap_which = 0.600000"));
    }

    fn scored_labels(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1..=max_len)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec((0u8..8).prop_map(|q| q as f64 / 8.0), n),
                    proptest::collection::vec(any::<bool>(), n),
                )
            })
            .prop_filter("needs a positive", |(_, l)| l.iter().any(|&x| x))
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force((scores, labels) in scored_labels(32)) {
            let ap = average_precision(&scores, &labels).unwrap();
            prop_assert!((ap - brute_force_ap(&scores, &labels)).abs() < 1e-12);
            let curve = pr_curve(&scores, &labels).unwrap();
            let mut prev = 0.0;
            let mut area = 0.0;
            for p in &curve.points {
                prop_assert!(p.recall >= prev);
                area += (p.recall - prev) * p.precision;
                prev = p.recall;
            }
            prop_assert!((area - ap).abs() < 1e-12);
        }

        #[test]
        fn ap_rank_invariant((scores, labels) in scored_labels(32)) {
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() / 30.0).collect();
            let a = average_precision(&scores, &labels).unwrap();
            let b = average_precision(&transformed, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn siou_scale_invariant_and_bounded(
            pred in proptest::collection::vec(0.0..1.0f64, 24),
            gt in proptest::collection::vec(any::<bool>(), 24),
            scale in 0.05..1.0f64,
        ) {
            prop_assume!(gt.iter().any(|&g| g));
            let g: Vec<f64> = gt.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let p = t2(3, 8, pred.clone());
            let ps = t2(3, 8, pred.iter().map(|v| v * scale).collect());
            let gt2 = t2(3, 8, g.clone());
            let a = siou_when(&p, &gt2).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - siou_when(&ps, &gt2).unwrap()).abs() < 1e-12);

            let p4 = p.clone().reshape(&[2, 2, 3, 2]).unwrap();
            let ps4 = ps.clone().reshape(&[2, 2, 3, 2]).unwrap();
            let g4 = gt2.clone().reshape(&[2, 2, 3, 2]).unwrap();
            let b = siou_where(&p4, &g4).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!((b - siou_where(&ps4, &g4).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn displacement_symmetric(
            a in proptest::collection::vec(0.0..1.0f64, 2 * 3 * 4 * 3),
            b in proptest::collection::vec(0.0..1.0f64, 2 * 3 * 4 * 3),
        ) {
            // Binary tensors with mass on the same slices so both orders
            // evaluate the same (camera, timestep) pairs.
            let to_bin = |v: &[f64]| v.iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect::<Vec<_>>();
            let (mut ba, mut bb) = (to_bin(&a), to_bin(&b));
            for s in 0..6 {
                ba[s * 12] = 1.0;
                bb[s * 12] = 1.0;
            }
            let ta = DenseTensor::new(&[2, 3, 4, 3], ba).unwrap();
            let tb = DenseTensor::new(&[2, 3, 4, 3], bb).unwrap();
            let ab: (f64, f64) = displacement_errors(&ta, &tb, IMAGE_WIDTH, IMAGE_HEIGHT).unwrap();
            let ba: (f64, f64) = displacement_errors(&tb, &ta, IMAGE_WIDTH, IMAGE_HEIGHT).unwrap();
            prop_assert!((ab.0 - ba.0).abs() < 1e-9 && (ab.1 - ba.1).abs() < 1e-9);
        }
    }
}
