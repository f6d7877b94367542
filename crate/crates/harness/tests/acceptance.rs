//! Acceptance run: one PASS/FAIL line per criterion, then a single assert.
//!
//! `cargo test -p trajtensor-harness --test acceptance`

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajtensor_core::gradsuite::{layer_suite, model_suite};
use trajtensor_core::models::{Family, Model, ModelSpec};
use trajtensor_core::{
    average_precision, center_of_mass, displacement_errors, grid_center_of_mass, siou_when, siou_where, Heatmap,
    Task, Tensor,
};
use trajtensor_datagen::{generate, Dataset, MctfSample, ScenarioConfig};
use trajtensor_harness::fitting::tensor_model;
use trajtensor_harness::train::{fit, TrainOptions};
use trajtensor_harness::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Default scenario at the default seed: five cameras, about 2000 samples.
fn benchmark_dataset() -> Dataset {
    generate(&ScenarioConfig::default(), 0).unwrap()
}

/// The 3D-CNN configuration of the benchmark ordering check. Full-width
/// training does not fit the single-core time budget, so the encoder runs
/// at half width with a capped epoch count.
fn benchmark_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.method = Method::Model(Family::Cnn3d);
    cfg.task = Task::Which;
    cfg.model.channels = Some(vec![16, 32, 64, 128]);
    cfg.train.max_epochs = 20;
    cfg
}

// Brute force: for every candidate threshold (each distinct score), count
// predictions at or above it; AP sums precision times the recall gained.
fn oracle_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut ap = 0.0;
    let mut last_recall = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l).count() as f64;
        let predicted = scores.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / positives;
        ap += (recall - last_recall) * (tp / predicted);
        last_recall = recall;
    }
    ap
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut no_positive = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=32);
        let coarse = rng.gen_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { rng.gen_range(0..5) as f64 / 4.0 } else { rng.gen() })
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        match average_precision(&scores, &labels) {
            Ok(ap) => worst = worst.max((ap - oracle_ap(&scores, &labels)).abs()),
            Err(_) if !labels.contains(&true) => no_positive += 1,
            Err(e) => return verdict(false, format!("unexpected error {e}")),
        }
    }
    let took = start.elapsed();
    verdict(
        worst < 1e-12 && took < Duration::from_secs(5),
        format!("max |AP - oracle| = {worst:.1e} ({no_positive} all-negative instances rejected), {took:.2?}"),
    )
}

fn criterion_2() -> Verdict {
    let (k, m, w, h) = (3, 60, 16, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();

    // Uniform predictions use a power of two so every partial sum is exact.
    // One positive camera with 15 positive steps.
    let mut gt_when = Tensor::zeros(&[k, m]);
    for t in 20..35 {
        gt_when.data_mut()[m + t] = 1.0;
    }
    let uniform = Tensor::filled(&[k, m], 0.5);
    let when_value = siou_when(&uniform, &gt_when).unwrap();
    if when_value != 15.0 / 60.0 {
        failures.push(format!("uniform siou_when {when_value}"));
    }
    // One positive (camera, step) with 6 positive cells.
    let mut gt_where = Tensor::zeros(&[k, m, w, h]);
    for cell in [10, 11, 12, 19, 20, 21] {
        gt_where.data_mut()[(m + 7) * w * h + cell] = 1.0;
    }
    let where_value = siou_where(&Tensor::filled(&[k, m, w, h], 0.25), &gt_where).unwrap();
    if where_value != 6.0 / 144.0 {
        failures.push(format!("uniform siou_where {where_value}"));
    }

    // Perfect predictions on random binary targets.
    for _ in 0..20 {
        let when = Tensor::from_fn(&[k, m], |_| rng.gen_bool(0.2) as u8 as f64);
        let mut where_ = Tensor::zeros(&[k, m, w, h]);
        for (i, &on) in when.data().iter().enumerate() {
            if on > 0.0 {
                let cell = rng.gen_range(0..w * h);
                where_.data_mut()[i * w * h + cell] = 1.0;
            }
        }
        if when.data().iter().all(|&v| v == 0.0) {
            continue;
        }
        let labels: Vec<bool> = where_.data().iter().map(|&v| v > 0.0).collect();
        let perfect = [
            average_precision(when.data(), &when.data().iter().map(|&v| v > 0.0).collect::<Vec<_>>()).unwrap() == 1.0,
            average_precision(where_.data(), &labels).unwrap() == 1.0,
            siou_when(&when, &when).unwrap() == 1.0,
            siou_where(&where_, &where_).unwrap() == 1.0,
            displacement_errors(&where_, &where_, 1920.0, 1080.0).unwrap() == (0.0, 0.0),
        ];
        if perfect.contains(&false) {
            failures.push(format!("perfect prediction {perfect:?}"));
            break;
        }
    }
    verdict(failures.is_empty(), if failures.is_empty() { "all closed forms exact".into() } else { failures.join(", ") })
}

fn criterion_3() -> Verdict {
    let (w, h) = (16, 9);
    let uniform = Heatmap::from_values(w, h, vec![1.0; w * h]).unwrap();
    let mut one = vec![0.0; w * h];
    one[0] = 1.0;
    let single = Heatmap::from_values(w, h, one).unwrap();
    let mut weights = vec![0.0; w * h];
    weights[0] = 1.0;
    weights[4 * h] = 3.0;
    let got = [
        center_of_mass(&uniform, 1920.0, 1080.0).unwrap(),
        center_of_mass(&single, 1920.0, 1080.0).unwrap(),
        grid_center_of_mass(&weights, w, h, 1920.0, 1080.0).unwrap(),
    ];
    let want = [(960.0, 540.0), (60.0, 60.0), (420.0, 60.0)];

    let mut gt = Tensor::zeros(&[1, 1, w, h]);
    let mut pred = Tensor::zeros(&[1, 1, w, h]);
    gt.data_mut()[5 * h + 4] = 1.0;
    pred.data_mut()[6 * h + 4] = 1.0;
    let shift = displacement_errors(&pred, &gt, 1920.0, 1080.0).unwrap();
    verdict(
        got == want && shift == (120.0, 120.0),
        format!("centroids {got:?}, one-cell shift ADE/FDE = {shift:?}"),
    )
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut entries = layer_suite().unwrap();
    entries.extend(model_suite().unwrap());
    let took = start.elapsed();
    let failed: Vec<&str> = entries.iter().filter(|e| !e.passed()).map(|e| e.name.as_str()).collect();
    let worst = entries.iter().map(|e| e.report.max_rel_error()).fold(0.0, f64::max);
    verdict(
        failed.is_empty() && took < Duration::from_secs(120),
        format!("{} entries, failed {failed:?}, max rel error {worst:.1e}, {took:.1?}", entries.len()),
    )
}

struct Benchmark {
    ds: Dataset,
    cfg: RunConfig,
    cv: CrossValidation,
}

fn criterion_5() -> (Verdict, Option<Benchmark>) {
    let start = Instant::now();
    let ds = benchmark_dataset();
    let cfg = benchmark_config();
    let cv = cross_validate(&cfg, &ds).unwrap();
    let baseline = |method| {
        let c = RunConfig { method, ..cfg.clone() };
        cross_validate(&c, &ds).unwrap().report.mean.ap_which.unwrap()
    };
    let shortest = baseline(Method::ShortestDistance);
    let mean = baseline(Method::Mean);
    let took = start.elapsed();
    let model = cv.report.mean.ap_which.unwrap();
    let margin = 100.0 * (model - shortest.max(mean));
    let v = verdict(
        margin >= 5.0 && took < Duration::from_secs(30 * 60),
        format!(
            "{} samples; AP_which 3D-CNN {:.1}, shortest-distance {:.1}, mean {:.1}; margin {margin:.1} points, {took:.0?}",
            ds.samples.len(),
            100.0 * model,
            100.0 * shortest,
            100.0 * mean
        ),
    );
    (v, Some(Benchmark { ds, cfg, cv }))
}

fn criterion_6(b: &Benchmark) -> Verdict {
    let fits: Vec<&Fitted> = b.cv.fits.iter().map(|f| &f.fitted).collect();
    let ab = ablate_single_view(&b.cfg, &b.ds, &fits).unwrap();
    let multi = ab.multi_view.mean.ap_which.unwrap();
    let single = ab.single_view.mean.ap_which.unwrap();
    verdict(
        100.0 * (single - multi) <= 1.0,
        format!("AP_which multi-view {:.1}, single-view {:.1}", 100.0 * multi, 100.0 * single),
    )
}

fn criterion_7(b: &Benchmark) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let enc = Encoder::new(&b.cfg, &b.ds);
    let mut models: Vec<Model> = vec![tensor_model(&b.cv.fits[0].fitted).unwrap().clone()];
    for family in [Family::Cnn2d1d, Family::CnnGru] {
        models.push(Model::new(ModelSpec::new(family, Task::When, b.ds.cameras()), &mut rng).unwrap());
    }
    let mut mismatches = 0;
    for g in 0..100 {
        let model = &models[g % models.len()];
        let size = rng.gen_range(1..=4);
        let group: Vec<&MctfSample> = b.ds.samples.choose_multiple(&mut rng, size).collect();
        let inputs: Vec<Tensor> = group.iter().map(|s| enc.tensor_input(s, View::Multi).unwrap()).collect();
        let stacked = stacked_predict(model, &inputs).unwrap();
        for (x, y) in inputs.iter().zip(&stacked) {
            let alone = stacked_predict(model, std::slice::from_ref(x)).unwrap();
            if alone[0].data().iter().zip(y.data()).any(|(a, b)| a.to_bits() != b.to_bits()) {
                mismatches += 1;
            }
        }
    }
    verdict(mismatches == 0, format!("100 groups of 1-4 over 3 tensor families, {mismatches} bitwise mismatches"))
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(name, fs::read(path).unwrap());
            }
        }
    }
    out
}

fn criterion_8() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.method = Method::Model(Family::Cnn3d);
    cfg.model.channels = Some(vec![2, 4, 4, 8]);
    cfg.train.max_epochs = 3;
    let mut scenario = ScenarioConfig::default();
    scenario.steps_per_day = 400;
    cfg.scenario = Some(scenario);
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        fs::write(d.join("run.toml"), cfg.to_toml()).unwrap();
        for args in [
            vec!["datagen", "--config", "run.toml"],
            vec!["crossval", "--config", "run.toml", "--out", "results"],
            vec!["report", "--config", "run.toml", "--out", "results"],
        ] {
            let out = Command::new(env!("CARGO_BIN_EXE_trajtensor"))
                .args(&args)
                .current_dir(d)
                .output()
                .unwrap();
            if !out.status.success() {
                return verdict(false, format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
            }
        }
        trees.push(read_tree(d));
    }
    let differing: Vec<&String> = trees[0]
        .iter()
        .filter(|(name, bytes)| trees[1].get(*name) != Some(*bytes))
        .map(|(name, _)| name)
        .collect();
    verdict(
        differing.is_empty() && trees[0].len() == trees[1].len(),
        format!("{} files compared, differing {differing:?}", trees[0].len()),
    )
}

fn criterion_9(ds: &Dataset) -> Verdict {
    let (k, m) = (ds.cameras(), ds.meta.horizon);
    let mut bad = 0;
    for s in &ds.samples {
        let t = s.targets(k, m).unwrap();
        let cells = t.where_.len() / (k * m);
        let when: Vec<f64> = t
            .where_
            .data()
            .chunks(cells)
            .map(|c| c.iter().any(|&v| v > 0.0) as u8 as f64)
            .collect();
        let which: Vec<f64> = when.chunks(m).map(|c| c.iter().any(|&v| v > 0.0) as u8 as f64).collect();
        if when != t.when.data() || which != t.which.data() {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("{}/{} samples consistent", ds.samples.len() - bad, ds.samples.len()))
}

fn criterion_10(ds: &Dataset) -> Verdict {
    let mut worst = (String::new(), 0.0f64);
    let mut failed = Vec::new();
    for family in Family::ALL {
        let picked: Vec<&MctfSample> = ds
            .samples
            .iter()
            .filter(|s| !family.is_coordinate() || s.departure_camera == 0)
            .take(8)
            .collect();
        for task in Task::ALL {
            let cfg = RunConfig { method: Method::Model(family), task, ..RunConfig::default() };
            let enc = Encoder::new(&cfg, ds);
            let spec = cfg.model_spec(ds.cameras(), ds.meta.observed, ds.meta.horizon).unwrap().unwrap();
            let mut model = Model::new(spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let opts = TrainOptions {
                learning_rate: 10.0 * family.default_learning_rate(),
                batch_size: 8,
                max_epochs: 200,
                patience: 200,
                stop_below: Some(0.05),
                seed: 1,
            };
            let batch = |idx: &[usize]| {
                let chosen: Vec<&MctfSample> = idx.iter().map(|&i| picked[i]).collect();
                enc.batch(family, &chosen, View::Multi)
            };
            let log = fit(&mut model.net, &opts, &(0..picked.len()).collect::<Vec<_>>(), &[], &batch).unwrap();
            let loss = log.final_train_loss().unwrap();
            let name = format!("{family}/{task}");
            if loss >= 0.05 {
                failed.push(format!("{name} {loss:.3}"));
            }
            if log.history.len() as f64 > worst.1 {
                worst = (name, log.history.len() as f64);
            }
        }
    }
    verdict(
        failed.is_empty(),
        format!("18 heads on 8 samples, failed {failed:?}, slowest {} at {} epochs", worst.0, worst.1),
    )
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| verdict(false, "panicked"));
    // Straight to the stderr handle so the line shows without --nocapture.
    let line = format!("criterion {n:>2} {name:<28} {}  {}\n", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    v.pass
}

#[test]
fn acceptance() {
    let mut results = vec![
        run(1, "AP oracle", criterion_1),
        run(2, "closed-form metrics", criterion_2),
        run(3, "centroids", criterion_3),
        run(4, "gradient suite", criterion_4),
    ];

    let mut bench = None;
    results.push(run(5, "benchmark ordering", || {
        let (v, b) = criterion_5();
        bench = b;
        v
    }));
    match &bench {
        Some(b) => {
            results.push(run(6, "multi-view ablation", || criterion_6(b)));
            results.push(run(7, "multi-target stacking", || criterion_7(b)));
        }
        None => {
            results.push(run(6, "multi-view ablation", || verdict(false, "no benchmark fits")));
            results.push(run(7, "multi-target stacking", || verdict(false, "no benchmark fits")));
        }
    }
    results.push(run(8, "determinism", criterion_8));
    let ds = bench.map(|b| b.ds).unwrap_or_else(benchmark_dataset);
    results.push(run(9, "any-reduction consistency", || criterion_9(&ds)));
    results.push(run(10, "toy overfit", || criterion_10(&ds)));

    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
