//! Experiment runner: config files, trial orchestration, ledgers and image output.

mod config;
mod images;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::SplitManifest;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, MetricsRow, Scorer};
use crate::training::{checkpoint, restore, ModelKind, TrainState};

pub use config::{
    DatasetSpec, EmitSpec, ExperimentConfig, GridSpec, MapSpec, Sources, SplitSpec, DATA_ROOT_ENV,
    SCHEMA_VERSION,
};
pub use images::{sample_grid, score_map, Ppm, ScoreMap};

/// One model trained on one trial's split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub model_kind: ModelKind,
    pub scorer: Scorer,
    pub row: Option<MetricsRow>,
    pub error: Option<String>,
}

/// Mean and population standard deviation over the successful trials of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model_kind: ModelKind,
    pub trials: usize,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub auroc_mean: Option<f64>,
    pub auroc_std: Option<f64>,
}

impl Aggregate {
    pub fn table_cell(&self) -> String {
        crate::eval::table_cell(self.accuracy_mean, self.auroc_mean)
    }
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (Some(m), Some(var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub name: String,
    pub dataset: String,
    pub base_seed: u64,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl RunLedger {
    pub fn new(name: &str, dataset: &str, base_seed: u64, records: Vec<TrialRecord>) -> Self {
        let aggregates = Self::aggregate(&records);
        RunLedger {
            name: name.to_string(),
            dataset: dataset.to_string(),
            base_seed,
            records,
            aggregates,
        }
    }

    /// Aggregates per model, in first-appearance order.
    pub fn aggregate(records: &[TrialRecord]) -> Vec<Aggregate> {
        let mut kinds: Vec<ModelKind> = Vec::new();
        for r in records {
            if !kinds.contains(&r.model_kind) {
                kinds.push(r.model_kind);
            }
        }
        kinds
            .into_iter()
            .map(|kind| {
                let rows: Vec<&MetricsRow> = records
                    .iter()
                    .filter(|r| r.model_kind == kind)
                    .filter_map(|r| r.row.as_ref())
                    .collect();
                let acc: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
                let auc: Vec<f64> = rows.iter().filter_map(|r| r.auroc).collect();
                let (accuracy_mean, accuracy_std) = mean_std(&acc);
                let (auroc_mean, auroc_std) = mean_std(&auc);
                Aggregate {
                    model_kind: kind,
                    trials: rows.len(),
                    accuracy_mean,
                    accuracy_std,
                    auroc_mean,
                    auroc_std,
                }
            })
            .collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &MetricsRow> {
        self.records.iter().filter_map(|r| r.row.as_ref())
    }

    pub fn all_failed(&self) -> bool {
        self.records.iter().all(|r| r.row.is_none())
    }

    pub fn rows_for(&self, kind: ModelKind) -> Vec<&MetricsRow> {
        self.records
            .iter()
            .filter(|r| r.model_kind == kind)
            .filter_map(|r| r.row.as_ref())
            .collect()
    }

    /// Ledger JSON, the flat metrics file and a summary table.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self)?;
        write_file(&dir.join("ledger.json"), json.as_bytes())?;
        let mut csv = String::from(MetricsRow::HEADER);
        csv.push('\n');
        for r in self.rows() {
            csv += &r.to_csv();
            csv.push('\n');
        }
        write_file(&dir.join("metrics.csv"), csv.as_bytes())?;
        let mut table = String::from("model_kind | trials | accuracy | auroc\n");
        for a in &self.aggregates {
            let pm = |m: Option<f64>, s: Option<f64>| match (m, s) {
                (Some(m), Some(s)) => format!("{:.2} +- {:.2}", 100.0 * m, 100.0 * s),
                _ => "-".into(),
            };
            table += &format!(
                "{} | {} | {} | {}\n",
                a.model_kind,
                a.trials,
                pm(a.accuracy_mean, a.accuracy_std),
                pm(a.auroc_mean, a.auroc_std)
            );
        }
        write_file(&dir.join("summary.txt"), table.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("ledger.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Overrides applied on top of an experiment config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub base_seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    /// Used for every model it applies to; others keep their default.
    pub scorer: Option<Scorer>,
    pub parallel: bool,
    /// Write reports, checkpoints, images and the ledger to the output directory.
    pub persist: bool,
}

fn scorer_for(kind: ModelKind, requested: Option<Scorer>) -> Scorer {
    match requested {
        Some(s) if s.supports(kind) => s,
        Some(s) => {
            log::warn!("scorer {s} does not apply to {kind}; using {}", Scorer::default_for(kind));
            Scorer::default_for(kind)
        }
        None => Scorer::default_for(kind),
    }
}

struct TrialContext<'a> {
    cfg: &'a ExperimentConfig,
    kinds: &'a [ModelKind],
    opts: &'a RunOptions,
    out: PathBuf,
    dataset: String,
}

fn train_and_report(
    ctx: &TrialContext<'_>,
    trial: usize,
    seed: u64,
    kind: ModelKind,
    split: &crate::data::OpenSetSplit,
) -> Result<MetricsRow> {
    let tc = ctx
        .cfg
        .train_config(kind, ExperimentConfig::default_arch(split), seed)?;
    let mut state = TrainState::new(tc, split.k())?;
    state.run(split, |s| {
        let r = evaluate(s, split, Some(scorer_for(kind, ctx.opts.scorer)))?;
        log::info!("trial {trial} {kind} step {}: {}", s.step(), r.table_cell());
        Ok(())
    })?;
    let report = evaluate(&state, split, Some(scorer_for(kind, ctx.opts.scorer)))?;
    log::info!("trial {trial} {kind}: {}", report.table_cell());
    if ctx.opts.persist {
        let dir = ctx.out.join(format!("trial-{trial}")).join(kind.as_str());
        create_dir(&dir)?;
        write_file(&dir.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
        checkpoint(&state, &dir.join("checkpoint"))?;
        if let Some(g) = ctx.cfg.emit.sample_grid {
            if kind.is_gan() {
                sample_grid(&state, g.rows, g.cols, seed)?.write(&dir.join("samples.ppm"))?;
            }
        }
        if let Some(m) = ctx.cfg.emit.score_map {
            score_map(&state, m.bounds, m.resolution, report.scorer)?
                .image
                .write(&dir.join("score_map.ppm"))?;
        }
    }
    Ok(MetricsRow {
        run_id: format!("{}-t{trial}-{kind}", ctx.cfg.name),
        model_kind: kind,
        dataset: ctx.dataset.clone(),
        labels_per_category: ctx.cfg.split.labels_per_category,
        seed,
        accuracy: report.closed_accuracy,
        auroc: report.auroc,
    })
}

fn run_trial(ctx: &TrialContext<'_>, trial: usize) -> Vec<TrialRecord> {
    let seed = ctx.opts.base_seed.unwrap_or(ctx.cfg.base_seed) + trial as u64;
    let record = |kind: ModelKind, res: Result<MetricsRow>| {
        if let Err(e) = &res {
            log::error!("trial {trial} {kind} failed: {e}");
        }
        TrialRecord {
            trial,
            seed,
            model_kind: kind,
            scorer: scorer_for(kind, ctx.opts.scorer),
            error: res.as_ref().err().map(|e| e.to_string()),
            row: res.ok(),
        }
    };
    let split = ctx.cfg.sources(seed).and_then(|s| ctx.cfg.make_split(&s, seed));
    let split = match split {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return ctx
                .kinds
                .iter()
                .map(|&k| record(k, Err(Error::arg(msg.clone()))))
                .collect();
        }
    };
    if ctx.opts.persist {
        let dir = ctx.out.join(format!("trial-{trial}"));
        let manifest = serde_json::to_string_pretty(split.manifest()).map_err(Error::from);
        if let Err(e) = create_dir(&dir).and_then(|_| write_file(&dir.join("split.json"), manifest?.as_bytes())) {
            log::error!("trial {trial}: could not persist split: {e}");
        }
    }
    ctx.kinds
        .iter()
        .map(|&kind| record(kind, train_and_report(ctx, trial, seed, kind, &split)))
        .collect()
}

/// Run every trial and model of an experiment. Failed trials are recorded and
/// the remaining ones proceed.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunLedger> {
    let kinds = cfg.model_kinds()?;
    let trials = opts.trials.unwrap_or(cfg.trials);
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let ctx = TrialContext {
        cfg,
        kinds: &kinds,
        opts,
        out: opts.out.clone().unwrap_or_else(|| cfg.output_dir()),
        dataset: cfg.dataset_name(),
    };
    let per_trial: Vec<Vec<TrialRecord>> = if opts.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..trials)
                .map(|t| {
                    let ctx = &ctx;
                    s.spawn(move || run_trial(ctx, t))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("trial thread panicked"))
                .collect()
        })
    } else {
        (0..trials).map(|t| run_trial(&ctx, t)).collect()
    };
    let base = opts.base_seed.unwrap_or(cfg.base_seed);
    let ledger = RunLedger::new(&cfg.name, &ctx.dataset, base, per_trial.into_iter().flatten().collect());
    if opts.persist {
        ledger.write(&ctx.out)?;
    }
    Ok(ledger)
}

#[derive(Debug, Parser)]
#[command(name = "sslosr", version, about = "Semi-supervised open-set GAN experiments")]
pub struct Cli {
    /// Root for relative dataset paths in config files.
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate every configured model over all trials.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Base seed; trial i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        scorer: Option<Scorer>,
        /// Run trials on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Write the split manifest for one seed.
    MakeSplit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a split and print `accuracy | auroc`.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        scorer: Option<Scorer>,
        /// Also write the full report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a grid of generator samples as PPM.
    EmitGrid {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        rows: usize,
        #[arg(long, default_value_t = 8)]
        cols: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a 2D score map of a classifier as PPM.
    EmitMap {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `x_min,x_max,y_min,y_max`
        #[arg(long, default_value = "-1,1,-1,1", value_parser = parse_bounds, allow_hyphen_values = true)]
        bounds: [f64; 4],
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        #[arg(long)]
        scorer: Option<Scorer>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_bounds(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected four comma-separated numbers".to_string())
}

/// 2 for problems with the invocation or its inputs, 1 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric { .. } | Error::Diverged { .. } => 1,
        _ => 2,
    }
}

fn load_config(path: &Path, data_root: Option<&Path>) -> Result<ExperimentConfig> {
    match data_root {
        Some(root) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut cfg = ExperimentConfig::from_toml(&text)?;
            cfg.resolve_paths(root);
            cfg.check_paths()?;
            Ok(cfg)
        }
        None => ExperimentConfig::load(path),
    }
}

fn read_manifest(path: &Path) -> Result<SplitManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Execute a parsed command, returning the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let root = cli.data_root.as_deref();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            trials,
            scorer,
            parallel,
        } => {
            let cfg = load_config(&config, root)?;
            let opts = RunOptions {
                base_seed: seed,
                trials,
                out,
                scorer,
                parallel,
                persist: true,
            };
            let ledger = run_experiment(&cfg, &opts)?;
            for a in &ledger.aggregates {
                println!("{:<10} {}", a.model_kind.as_str(), a.table_cell());
            }
            Ok(if ledger.all_failed() { 1 } else { 0 })
        }
        Command::MakeSplit { config, seed, out } => {
            let cfg = load_config(&config, root)?;
            let seed = seed.unwrap_or(cfg.base_seed);
            let split = cfg.make_split(&cfg.sources(seed)?, seed)?;
            write_file(&out, serde_json::to_string_pretty(split.manifest())?.as_bytes())?;
            let m = split.manifest();
            println!(
                "K={} labelled={} unlabelled={} test={}+{}",
                m.k,
                m.lab_train.len(),
                m.unlab_train.len(),
                m.test_known.len(),
                m.test_novel.len()
            );
            Ok(0)
        }
        Command::Eval {
            config,
            checkpoint,
            split,
            scorer,
            out,
        } => {
            let cfg = load_config(&config, root)?;
            let split = cfg.split_from_manifest(read_manifest(&split)?)?;
            let state = restore(&checkpoint)?;
            let report: EvalReport = evaluate(&state, &split, scorer)?;
            if let Some(out) = out {
                write_file(&out, serde_json::to_string_pretty(&report)?.as_bytes())?;
            }
            println!("{}", report.table_cell());
            Ok(0)
        }
        Command::EmitGrid {
            checkpoint,
            rows,
            cols,
            seed,
            out,
        } => {
            let state = restore(&checkpoint)?;
            sample_grid(&state, rows, cols, seed)?.write(&out)?;
            Ok(0)
        }
        Command::EmitMap {
            checkpoint,
            bounds,
            resolution,
            scorer,
            out,
        } => {
            let state = restore(&checkpoint)?;
            let scorer = scorer.unwrap_or_else(|| Scorer::default_for(state.model_kind()));
            score_map(&state, bounds, resolution, scorer)?.image.write(&out)?;
            Ok(0)
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
