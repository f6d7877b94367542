//! Report files. Every name embeds the config hash, and no file records
//! wall-clock time, so identical runs write identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajtensor_core::MetricsReport;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::{sweep_csv, Ablation, SweepRow};
use crate::fitting::FoldLog;

/// Structured report: the metrics plus the full config that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub config: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct ReportWriter {
    dir: PathBuf,
    stem: String,
    config: String,
    hash: String,
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

impl ReportWriter {
    pub fn new(dir: impl AsRef<Path>, cfg: &RunConfig) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        Ok(Self { dir, stem: cfg.stem(), config: cfg.to_toml(), hash: cfg.hash() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stem(&self) -> &str {
        &self.stem
    }

    fn path(&self, label: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{label}.{ext}", self.stem))
    }

    fn echo(&self) -> String {
        let mut out = String::from("# config\n");
        out.push_str(&self.config);
        out.push_str("\n# results\n");
        out
    }

    /// `{stem}.{label}.txt`, `.json` and one PR-curve CSV per fold.
    pub fn write_metrics(&self, report: &MetricsReport, label: &str) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        files.push(write(self.path(label, "txt"), &(self.echo() + &report.to_text()))?);
        let structured = ReportFile { config_hash: self.hash.clone(), config: self.config.clone(), report: report.clone() };
        let json = serde_json::to_string_pretty(&structured).expect("reports serialize");
        files.push(write(self.path(label, "json"), &json)?);
        for fold in &report.folds {
            if fold.skipped.is_none() {
                let label = format!("{label}.fold{}.pr", fold.fold);
                files.push(write(self.path(&label, "csv"), &fold.pr_curve.to_csv())?);
            }
        }
        Ok(files)
    }

    pub fn write_sweep(&self, rows: &[SweepRow]) -> Result<Vec<PathBuf>> {
        let json = serde_json::to_string_pretty(rows).expect("sweep rows serialize");
        Ok(vec![write(self.path("sweep", "csv"), &sweep_csv(rows))?, write(self.path("sweep", "json"), &json)?])
    }

    pub fn write_ablation(&self, ab: &Ablation) -> Result<Vec<PathBuf>> {
        let mut files = self.write_metrics(&ab.multi_view, "ablation.multi")?;
        files.extend(self.write_metrics(&ab.single_view, "ablation.single")?);
        let task = ab.multi_view.task;
        let fmt = |r: &MetricsReport| r.mean.ap(task).map_or("n/a".to_string(), |v| format!("{v:.6}"));
        let text = format!(
            "{}multi_view.ap_{task} = {}\nsingle_view.ap_{task} = {}\n",
            self.echo(),
            fmt(&ab.multi_view),
            fmt(&ab.single_view)
        );
        files.push(write(self.path("ablation", "txt"), &text)?);
        Ok(files)
    }

    pub fn write_train_logs(&self, logs: &[&FoldLog]) -> Result<PathBuf> {
        let json = serde_json::to_string_pretty(logs).expect("train logs serialize");
        write(self.path("train", "json"), &json)
    }
}

/// One CSV line per structured report in `dir`, sorted by file name.
pub fn summarize(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = String::from("file,method,task,folds,ap,siou_when,siou_where,ade,fde\n");
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let Ok(file) = serde_json::from_str::<ReportFile>(&text) else { continue };
        let r = &file.report;
        let m = &r.mean;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            path.file_name().unwrap().to_string_lossy(),
            r.method,
            r.task,
            r.folds.len(),
            fmt(m.ap(r.task)),
            fmt(m.siou_when),
            fmt(m.siou_where),
            fmt(m.ade_where),
            fmt(m.fde_where)
        ));
    }
    Ok(out)
}
