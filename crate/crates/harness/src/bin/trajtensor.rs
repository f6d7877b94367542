use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trajtensor_core::Task;
use trajtensor_datagen::{generate, group_multi_target, load_dataset, save_dataset, Dataset, ScenarioConfig};
use trajtensor_harness::experiments::{ablate_single_view, cross_validate, evaluate_folds, fold_plan, load_folds, sweep, train_folds};
use trajtensor_harness::fitting::save_fold_weights;
use trajtensor_harness::{predict_multi_target, summarize, Encoder, Fitted, HarnessError, Method, ReportWriter, Result, RunConfig, View};

#[derive(Parser)]
#[command(name = "trajtensor", about = "Multi-camera trajectory forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Datagen {
        #[command(flatten)]
        common: Common,
        /// Also write per-sample target tensors.
        #[arg(long)]
        cache_targets: bool,
    },
    /// Fit the configured method on every fold and save its weights.
    Train(Common),
    /// Evaluate saved fold weights on their test days.
    Evaluate(Common),
    /// Train and evaluate every fold.
    Crossval(Common),
    /// Cross-validate every heatmap size × σ cell.
    Sweep(Common),
    /// Compare multi-view and single-view inputs on the same weights.
    Ablate(Common),
    /// Batch-stacked prediction of multi-target groups with saved weights.
    PredictMt(Common),
    /// Summarize every structured report in the output directory.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    task: Option<String>,
    /// Dataset directory (overrides the config).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = &self.model {
            cfg.method = m.parse::<Method>()?;
        }
        if let Some(t) = &self.task {
            cfg.task = t.parse::<Task>().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results"))
    }
}

fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    let ds = load_dataset(&cfg.dataset).map_err(|e| match e {
        trajtensor_datagen::DataError::Config(m) => HarnessError::Data(m),
        other => HarnessError::from(other),
    })?;
    ds.validate().map_err(|e| HarnessError::Data(e.to_string()))?;
    Ok(ds)
}

fn weights_dir(out: &Path) -> PathBuf {
    out.join("weights")
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Datagen { common, cache_targets } => {
            let cfg = common.config()?;
            let scenario = cfg.scenario.clone().unwrap_or_else(ScenarioConfig::default);
            let out = common.out.clone().unwrap_or_else(|| cfg.dataset.clone());
            let ds = generate(&scenario, cfg.seed)?;
            save_dataset(&ds, &out, cache_targets)?;
            println!("{} samples over {} days written to {}", ds.samples.len(), ds.days().len(), out.display());
        }
        Command::Train(common) => {
            let cfg = common.config()?;
            let ds = dataset(&cfg)?;
            let out = common.out();
            let fits = train_folds(&cfg, &ds)?;
            for fit in &fits {
                save_fold_weights(fit, &cfg.stem(), &weights_dir(&out))?;
            }
            let writer = ReportWriter::new(&out, &cfg)?;
            let logs: Vec<_> = fits.iter().map(|f| &f.log).collect();
            println!("{}", writer.write_train_logs(&logs)?.display());
        }
        Command::Evaluate(common) => {
            let cfg = common.config()?;
            let ds = dataset(&cfg)?;
            let out = common.out();
            let fits = load_folds(&cfg, &ds, &weights_dir(&out))?;
            let refs: Vec<&Fitted> = fits.iter().collect();
            let report = evaluate_folds(&cfg, &ds, &refs, View::Multi)?;
            print!("{}", report.to_text());
            print_files(&ReportWriter::new(&out, &cfg)?.write_metrics(&report, "evaluate")?);
        }
        Command::Crossval(common) => {
            let cfg = common.config()?;
            let ds = dataset(&cfg)?;
            let out = common.out();
            let cv = cross_validate(&cfg, &ds)?;
            for fit in &cv.fits {
                save_fold_weights(fit, &cfg.stem(), &weights_dir(&out))?;
            }
            let writer = ReportWriter::new(&out, &cfg)?;
            let logs: Vec<_> = cv.fits.iter().map(|f| &f.log).collect();
            writer.write_train_logs(&logs)?;
            print!("{}", cv.report.to_text());
            print_files(&writer.write_metrics(&cv.report, "crossval")?);
        }
        Command::Sweep(common) => {
            let cfg = common.config()?;
            let ds = dataset(&cfg)?;
            let rows = sweep(&cfg, &ds)?;
            print_files(&ReportWriter::new(common.out(), &cfg)?.write_sweep(&rows)?);
        }
        Command::Ablate(common) => {
            let cfg = common.config()?;
            let ds = dataset(&cfg)?;
            let fits = train_folds(&cfg, &ds)?;
            let refs: Vec<&Fitted> = fits.iter().map(|f| &f.fitted).collect();
            let ab = ablate_single_view(&cfg, &ds, &refs)?;
            print_files(&ReportWriter::new(common.out(), &cfg)?.write_ablation(&ab)?);
        }
        Command::PredictMt(common) => {
            let cfg = common.config()?;
            let ds = dataset(&cfg)?;
            let out = common.out();
            let fits = load_folds(&cfg, &ds, &weights_dir(&out))?;
            let plan = fold_plan(&cfg, &ds)?;
            let enc = Encoder::new(&cfg, &ds);
            let dir = out.join("predictions").join(cfg.stem());
            std::fs::create_dir_all(&dir).map_err(|e| HarnessError::Data(format!("{}: {e}", dir.display())))?;
            let groups = group_multi_target(&ds.samples, cfg.multi_target.bin_steps);
            let mut index = String::from("group,sample,day,departure_step,fold,file\n");
            for (g, members) in groups.iter().enumerate() {
                let group: Vec<_> = members.iter().map(|&i| &ds.samples[i]).collect();
                let fold = plan.fold_of(group[0].day).expect("every day has a fold");
                let preds = predict_multi_target(&fits[fold], &enc, &group)?;
                for (s, p) in group.iter().zip(preds) {
                    let name = format!("g{g:05}_s{:06}.tten", s.id);
                    p.save_tten(dir.join(&name))?;
                    index.push_str(&format!("{g},{},{},{},{fold},{name}\n", s.id, s.day, s.departure_step));
                }
            }
            let path = dir.join("index.csv");
            std::fs::write(&path, index).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
            println!("{} groups predicted into {}", groups.len(), dir.display());
        }
        Command::Report(common) => {
            let out = common.out();
            let summary = summarize(&out)?;
            let path = out.join("summary.csv");
            std::fs::write(&path, &summary).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
            print!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
