//! Command-line front end. Machine-readable `key=value` lines go to stdout,
//! progress and diagnostics to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::arch::{build, ArchId, Model};
use crate::config::RunConfig;
use crate::dataio::{gen_synthetic, load_dataset, read_image, Dataset};
use crate::augment::resize;
use crate::ensemble::{binarize, metrics, Ensemble, MetricsReport, METRICS_CSV_HEADER};
use crate::error::{Error, Result};
use crate::labels::LabelVector;
use crate::tensor::Tensor;
use crate::train::{load_model, save_model, split_dataset, train};

/// Exit status for bad usage or invalid input.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit status for I/O failures and corrupt files.
pub const EXIT_RUNTIME: u8 = 3;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "leafvote", version, about = "Micro CNN ensemble for multi-label leaf disease classification")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunFlags {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable. Applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                require_exists(path)?;
                RunConfig::from_file(path)?
            }
            None => RunConfig::default(),
        };
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(v) = self.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = Some(v);
        }
        if let Some(v) = self.image_size {
            cfg.train.image_size = v;
        }
        if let Some(v) = self.threshold {
            cfg.binarize.threshold = v;
        }
        if let Some(v) = self.split_seed {
            cfg.split_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a deterministic synthetic dataset of PPM images plus manifest.csv.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one architecture on the training split.
    Train {
        #[arg(long)]
        arch: ArchId,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch history CSV; defaults to history.csv next to the model.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Evaluate one model on the test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the metrics CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Evaluate each model and their majority-vote ensemble on the test split.
    EnsembleEval {
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        tiebreaker: Option<ArchId>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Run member models one after another instead of on the thread pool.
        #[arg(long)]
        serial: bool,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Predict the labels of one image.
    Predict {
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        tiebreaker: Option<ArchId>,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
}

fn require_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{} does not exist", path.display())))
    }
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<Model>> {
    paths
        .iter()
        .map(|p| {
            require_exists(p)?;
            load_model(p)
        })
        .collect()
}

fn test_split(data: &Path, image_size: usize, cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    require_exists(data)?;
    let ds = load_dataset(data, image_size)?;
    split_dataset(&ds, cfg.split_ratio, cfg.split_seed)
}

fn batches(ds: &Dataset) -> impl Iterator<Item = Result<Tensor>> + '_ {
    let idx: Vec<usize> = (0..ds.len()).collect();
    idx.chunks(EVAL_BATCH)
        .map(|c| ds.batch(c).map(|(x, _)| x))
        .collect::<Vec<_>>()
        .into_iter()
}

fn model_predictions(model: &Model, ds: &Dataset, cfg: &RunConfig) -> Result<Vec<LabelVector>> {
    let mut out = Vec::with_capacity(ds.len());
    let l = model.num_labels;
    for x in batches(ds) {
        let p = model.predict(&x?)?;
        out.extend(p.data().chunks(l).map(|row| binarize(row, cfg.binarize)));
    }
    Ok(out)
}

fn print_report(prefix: &str, report: &MetricsReport) {
    print!("{}", report.to_text(prefix));
}

fn write_csv(path: &Path, rows: &[String]) -> Result<()> {
    let mut text = format!("{METRICS_CSV_HEADER}\n");
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_train(arch: ArchId, data: &Path, out: &Path, history: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let (train_set, test_set) = test_split(data, cfg.train.image_size, cfg)?;
    let size = cfg.train.image_size;
    let mut model: Model = build(arch, [3, size, size], train_set.num_labels(), cfg.head_width)?;
    let tcfg = cfg.train_config(arch);
    info!(
        "training {arch}: {} train / {} test samples, {} epochs, batch {}, lr {}",
        train_set.len(),
        test_set.len(),
        tcfg.epochs,
        tcfg.batch_size,
        tcfg.adam.learning_rate
    );
    let start = Instant::now();
    let hist = train(&mut model, &train_set, &tcfg)?;
    info!("trained {arch} in {:.1}s", start.elapsed().as_secs_f64());
    save_model(&model, out)?;
    let history_path = match history {
        Some(p) => p.to_path_buf(),
        None => out.with_file_name("history.csv"),
    };
    fs::write(&history_path, hist.to_csv()).map_err(|e| Error::io(&history_path, e))?;

    println!("arch={arch}");
    println!("model={}", out.display());
    println!("history={}", history_path.display());
    println!("train_samples={}", train_set.len());
    println!("test_samples={}", test_set.len());
    println!("epochs={}", hist.records.len());
    if let Some(r) = hist.last() {
        println!("train.loss={:.6}", r.loss);
        println!("train.accuracy={:.6}", r.subset_accuracy);
        println!("train.f1={:.6}", r.micro_f1);
    }
    Ok(())
}

fn cmd_eval(model_path: &Path, data: &Path, csv: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let model = load_models(&[model_path.to_path_buf()])?.remove(0);
    let (_, test_set) = test_split(data, model.input_shape[1], cfg)?;
    let preds = model_predictions(&model, &test_set, cfg)?;
    let report = metrics(&preds, &test_set.labels)?;
    let row = report.csv_row(model.arch.name());
    println!("arch={}", model.arch);
    print_report("", &report);
    println!("csv={row}");
    if let Some(path) = csv {
        write_csv(path, &[row])?;
    }
    Ok(())
}

fn cmd_ensemble_eval(paths: &[PathBuf], tiebreaker: ArchId, data: &Path, csv: Option<&Path>, parallel: bool, cfg: &RunConfig) -> Result<()> {
    let models = load_models(paths)?;
    let ensemble = Ensemble::new(&models, tiebreaker, cfg.binarize)?;
    let (_, test_set) = test_split(data, models[0].input_shape[1], cfg)?;

    let mut member_preds: Vec<Vec<LabelVector>> = vec![Vec::new(); models.len()];
    let mut votes = Vec::with_capacity(test_set.len());
    let mut stats = Default::default();
    for x in batches(&test_set) {
        let probs = ensemble.probabilities(&x?, parallel)?;
        for (k, p) in probs.iter().enumerate() {
            let l = models[k].num_labels;
            member_preds[k].extend(p.data().chunks(l).map(|row| binarize(row, cfg.binarize)));
        }
        votes.extend(ensemble.vote(&probs, &mut stats)?);
    }

    let mut rows = Vec::new();
    for (k, (model, preds)) in models.iter().zip(&member_preds).enumerate() {
        let report = metrics(preds, &test_set.labels)?;
        println!("model{k}.arch={}", model.arch);
        print_report(&format!("model{k}"), &report);
        rows.push(report.csv_row(model.arch.name()));
    }
    let report = metrics(&votes, &test_set.labels)?;
    let name: Vec<&str> = models.iter().map(|m| m.arch.name()).collect();
    println!("ensemble.tiebreaker={tiebreaker}");
    println!("ensemble.tie_consults={}", stats.tie_consults);
    print_report("ensemble", &report);
    let row = report.csv_row(&name.join("+"));
    println!("csv={row}");
    rows.push(row);
    if let Some(path) = csv {
        write_csv(path, &rows)?;
    }
    Ok(())
}

fn cmd_predict(paths: &[PathBuf], tiebreaker: Option<ArchId>, image: &Path, cfg: &RunConfig) -> Result<()> {
    require_exists(image)?;
    let models = load_models(paths)?;
    let img = read_image(image)?;
    let size = models[0].input_shape[1];
    let x = resize(&img, size)?.reshape(&[1, 3, size, size])?;
    let (labels, probs) = if models.len() == 1 {
        let p = models[0].predict(&x)?;
        (binarize(p.data(), cfg.binarize), vec![p])
    } else {
        let ensemble = Ensemble::new(&models, tiebreaker.unwrap_or(cfg.tiebreaker), cfg.binarize)?;
        let probs = ensemble.probabilities(&x, true)?;
        let labels = ensemble.vote(&probs, &mut Default::default())?.remove(0);
        (labels, probs)
    };
    for (k, (m, p)) in models.iter().zip(&probs).enumerate() {
        let values: Vec<String> = p.data().iter().map(|v| format!("{v:.6}")).collect();
        println!("model{k}.{}={}", m.arch, values.join(","));
    }
    println!("labels={labels}");
    eprintln!("predicted: {labels}");
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic { out, n, size, seed } => {
            let manifest = gen_synthetic(n, size, seed, &out)?;
            println!("out={}", out.display());
            println!("images={}", manifest.len());
            println!("size={size}");
            Ok(())
        }
        Command::Train { arch, data, out, history, run } => {
            cmd_train(arch, &data, &out, history.as_deref(), &run.resolve()?)
        }
        Command::Eval { model, data, csv, run } => cmd_eval(&model, &data, csv.as_deref(), &run.resolve()?),
        Command::EnsembleEval { models, tiebreaker, data, csv, serial, run } => {
            let cfg = run.resolve()?;
            let tb = tiebreaker.unwrap_or(cfg.tiebreaker);
            cmd_ensemble_eval(&models, tb, &data, csv.as_deref(), !serial, &cfg)
        }
        Command::Predict { models, tiebreaker, image, run } => {
            cmd_predict(&models, tiebreaker, &image, &run.resolve()?)
        }
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}
