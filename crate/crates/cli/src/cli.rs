//! Command-line verbs. Exit codes: 0 success, 1 usage, 2 data, 3 internal.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use fragnet_chem::fragment::fragmenter_names;
use fragnet_core::data::splitter_names;
use fragnet_core::interpret::{aggregate_substructures, explain, export_embeddings, reducer_names, write_fragment_stats, ExplainOptions};
use fragnet_core::train::{evaluate, train_model, write_history, TrainConfig};
use fragnet_core::{load_csv, Checkpoint, CoreError, Dataset, Task};
use serde::Deserialize;

use crate::server::{serve, Models};

#[derive(Debug, Parser)]
#[command(name = "fragnet", version, about = "Hierarchical graph attention for molecular properties")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus a metric history CSV.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled CSV (RMSE or AUC-ROC).
    Evaluate(DataArgs),
    /// Print predictions for one SMILES.
    Predict(PredictArgs),
    /// Write attention weights and fragment contributions as JSON.
    Explain(ExplainArgs),
    /// Fragment statistics over low- and high-error molecules.
    Aggregate(AggregateArgs),
    /// Export penultimate embeddings as CSV.
    Embed(EmbedArgs),
    /// Serve /health, /models, /predict and /explain.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ColumnArgs {
    /// SMILES column name.
    #[arg(long)]
    pub smiles_col: Option<String>,
    /// Comma-separated target columns.
    #[arg(long, value_delimiter = ',')]
    pub target_cols: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON training configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Metric history CSV; defaults to `<out>.metrics.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// "regression" or "binary_multitask".
    #[arg(long)]
    pub task: Option<String>,
    #[command(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub smiles: String,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub smiles: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Node importance reduction: sender, receiver or max.
    #[arg(long, default_value = "sender")]
    pub reducer: String,
    #[arg(long, default_value_t = 0)]
    pub task: usize,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fragment table of the high-error molecules (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Full report including the low-error table (JSON).
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub low_threshold: f64,
    #[arg(long, default_value_t = 0.2)]
    pub top_fraction: f64,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of checkpoint JSON files. FRAGNET_MODELS_DIR takes precedence.
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
    /// Allowed CORS origin; any origin when omitted.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Config(_) => Failure::Usage(msg),
            CoreError::Tensor(_) => Failure::Internal(msg),
            _ => Failure::Data(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

/// Data-related keys that may sit next to the training keys in the config.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct DataConfig {
    smiles_col: Option<String>,
    target_cols: Option<Vec<String>>,
    task: Option<Task>,
}

fn parse_task(name: &str) -> Result<Task, Failure> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| Failure::Usage(format!("unknown task {name:?}; use regression or binary_multitask")))
}

fn load_dataset(path: &Path, smiles_col: &str, targets: &[String], task: Task) -> Result<Dataset, Failure> {
    if targets.is_empty() {
        return Err(Failure::Usage("no target columns given; pass --target-cols".into()));
    }
    let cols: Vec<&str> = targets.iter().map(String::as_str).collect();
    Ok(load_csv(path, smiles_col, &cols, task)?)
}

fn checkpoint_dataset(ckpt: &Checkpoint, args: &DataArgs) -> Result<Dataset, Failure> {
    let smiles = args.columns.smiles_col.clone().unwrap_or_else(|| "smiles".into());
    let targets = args
        .columns
        .target_cols
        .clone()
        .unwrap_or_else(|| ckpt.metadata.target_names.clone());
    load_dataset(&args.data, &smiles, &targets, ckpt.task())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Ok(Checkpoint::load(path)?)
}

fn history_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    out.with_file_name(format!("{stem}.metrics.csv"))
}

fn run_train(args: TrainArgs) -> Result<String, Failure> {
    let (config, data_cfg) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cfg: TrainConfig = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let data: DataConfig = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            (cfg, data)
        }
        None => (TrainConfig::default(), DataConfig::default()),
    };
    if !fragmenter_names().contains(&config.fragmenter.as_str()) {
        return Err(Failure::Usage(format!("unknown fragmenter {:?}; known: {:?}", config.fragmenter, fragmenter_names())));
    }
    if !splitter_names().contains(&config.split.kind.as_str()) {
        return Err(Failure::Usage(format!("unknown splitter {:?}; known: {:?}", config.split.kind, splitter_names())));
    }
    let task = match (&args.task, data_cfg.task) {
        (Some(t), _) => parse_task(t)?,
        (None, Some(t)) => t,
        (None, None) => Task::Regression,
    };
    let smiles = args.columns.smiles_col.or(data_cfg.smiles_col).unwrap_or_else(|| "smiles".into());
    let targets = args.columns.target_cols.or(data_cfg.target_cols).unwrap_or_default();
    let dataset = load_dataset(&args.data, &smiles, &targets, task)?;
    let split = config.split.apply(&dataset.smiles(), config.seed)?;
    let outcome = train_model(&dataset, &split, &config)?;
    let mut checkpoint = outcome.checkpoint;
    let test = evaluate(&checkpoint, &dataset.subset(&split.test))?;
    checkpoint.metadata.metrics.insert(format!("test_{}", test.metric), test.mean);
    checkpoint.save(&args.out)?;
    let history = args.history.unwrap_or_else(|| history_path(&args.out));
    write_history(&history, &outcome.history)?;
    Ok(format!(
        "trained {} epochs (best {}), test {} {:.4}\ncheckpoint: {}\nhistory: {}",
        checkpoint.metadata.epochs_run,
        checkpoint.metadata.best_epoch,
        test.metric,
        test.mean,
        args.out.display(),
        history.display()
    ))
}

fn run_evaluate(args: DataArgs) -> Result<String, Failure> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let dataset = checkpoint_dataset(&ckpt, &args)?;
    let ev = evaluate(&ckpt, &dataset)?;
    let body = serde_json::json!({ "metric": ev.metric, "per_task": ev.per_task, "mean": ev.mean, "n": dataset.len() });
    Ok(body.to_string())
}

fn run_predict(args: PredictArgs) -> Result<String, Failure> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let values = ckpt.predict(&args.smiles)?;
    Ok(values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
}

fn run_explain(args: ExplainArgs) -> Result<String, Failure> {
    if !reducer_names().contains(&args.reducer.as_str()) {
        return Err(Failure::Usage(format!("unknown reducer {:?}; known: {:?}", args.reducer, reducer_names())));
    }
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let options = ExplainOptions {
        reducer: args.reducer,
        task: args.task,
    };
    let e = explain(&ckpt, &args.smiles, &options)?;
    let text = serde_json::to_string_pretty(&e).map_err(|e| Failure::Internal(e.to_string()))?;
    match args.out {
        Some(path) => {
            std::fs::write(&path, text)?;
            Ok(format!("wrote {}", path.display()))
        }
        None => Ok(text),
    }
}

fn run_aggregate(args: AggregateArgs) -> Result<String, Failure> {
    let ckpt = load_checkpoint(&args.data.checkpoint)?;
    let dataset = checkpoint_dataset(&ckpt, &args.data)?;
    let report = aggregate_substructures(&ckpt, &dataset, args.low_threshold, args.top_fraction)?;
    write_fragment_stats(&args.out, &report.high_error)?;
    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.to_string()))?;
        std::fs::write(path, text)?;
    }
    let mut s = format!(
        "{} molecules, {} low-error, {} high-error\n{:<28} {:>7} {:>7} {:>7} {:>11} {:>12}\n",
        report.n_molecules, report.n_low_error, report.n_high_error, "fragment", "error", "weight", "contr.", "in low err.", "in high err."
    );
    for f in report.high_error.iter().take(10) {
        let flag = if f.only_high_error { "  *" } else { "" };
        let _ = writeln!(
            s,
            "{:<28} {:>7.2} {:>7.2} {:>7.2} {:>11.2} {:>12.2}{flag}",
            f.frag_smiles, f.mean_error, f.mean_weight, f.mean_contribution, f.pct_in_low_error, f.pct_in_high_error
        );
    }
    let flagged: Vec<&str> = report.high_error.iter().filter(|f| f.only_high_error).map(|f| f.frag_smiles.as_str()).collect();
    let _ = write!(s, "only in high-error molecules: {}", if flagged.is_empty() { "none".into() } else { flagged.join(" ") });
    Ok(s)
}

fn run_embed(args: EmbedArgs) -> Result<String, Failure> {
    let ckpt = load_checkpoint(&args.data.checkpoint)?;
    let dataset = checkpoint_dataset(&ckpt, &args.data)?;
    export_embeddings(&ckpt, &dataset, &args.out)?;
    Ok(format!("wrote {} rows to {}", dataset.len(), args.out.display()))
}

fn run_serve(args: ServeArgs) -> Result<String, Failure> {
    let dir = std::env::var_os("FRAGNET_MODELS_DIR")
        .map(PathBuf::from)
        .or(args.models_dir)
        .ok_or_else(|| Failure::Usage("pass --models-dir or set FRAGNET_MODELS_DIR".into()))?;
    let models = Models::scan(&dir)?;
    if models.models.is_empty() {
        return Err(Failure::Data(format!("no loadable checkpoint in {}", dir.display())));
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.to_string()))?;
    runtime
        .block_on(serve(Arc::new(models), args.port, args.cors_origin.as_deref()))
        .map_err(|e| Failure::Internal(e.to_string()))?;
    Ok(String::new())
}

pub fn execute(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Train(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Predict(a) => run_predict(a),
        Command::Explain(a) => run_explain(a),
        Command::Aggregate(a) => run_aggregate(a),
        Command::Embed(a) => run_embed(a),
        Command::Serve(a) => run_serve(a),
    }
}

/// Parses `args`, runs the verb and maps failures to exit codes.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
