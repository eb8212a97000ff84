//! The `nft` command line.
//!
//! Every subcommand accepts `--config FILE`, a `key=value` file whose
//! entries act as flags given before the command-line ones, so explicit
//! flags win. The effective configuration is printed to stderr.

pub mod checks;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{
    generate_planted, load_any, save_dataset, split, Dataset, EmbeddingTable, PlantedConfig,
};
use crate::error::{Error, Result};
use crate::factors::TreeCrf;
use crate::gnn::GnnConfig;
use crate::inference::{gibbs_sample, map_decode, sample_histogram, SamplerConfig};
use crate::training::{
    evaluate, load_checkpoint, predict_crf, save_checkpoint, train, ModelConfig, ModelParams,
    TrainConfig,
};

use checks::Inference;

/// Seed used when neither `--seed` nor `NFT_SEED` is given.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Parser, Debug)]
#[command(name = "nft", version, about = "Neural factor trees over labeled trees")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write its best checkpoint.
    Train(TrainArgs),
    /// Print per-node log-likelihood and MAP accuracy.
    Eval(EvalArgs),
    /// Write the MAP labeling of every tree.
    Decode(DecodeArgs),
    /// Write a Gibbs-sample histogram for every tree.
    Sample(SampleArgs),
    /// Check exact inference, gradients and the sampler against brute force.
    OracleCheck(OracleCheckArgs),
    /// Generate a planted synthetic dataset.
    GenSynthetic(GenArgs),
    /// Write an untrained checkpoint.
    Init(InitArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct Common {
    /// `key=value` file of default flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available processors).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Random seed; falls back to `NFT_SEED`, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
pub struct DataArgs {
    /// Dataset cache (JSON) or bracketed treebank file.
    #[arg(long)]
    pub data: PathBuf,
    /// Word-vector text file, required for treebank input.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub train: PathBuf,
    /// Validation set; model selection uses the training set without one.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics log to write (also printed to stdout).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Hidden size (default: max(16, attribute size)).
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = GnnConfig::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Train the independent-label model (edge factors disabled).
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub baseline: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 2)]
    pub thinning: usize,
    /// Assignments listed per tree.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct OracleCheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Check this CRF (text format) instead of the random suite.
    #[arg(long)]
    pub crf: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub crfs: usize,
    #[arg(long, default_value_t = 20)]
    pub gradient_instances: usize,
    /// Kept Gibbs samples per fixture CRF and seed; 0 skips the check.
    #[arg(long, default_value_t = 50_000)]
    pub tv_samples: usize,
    #[arg(long, default_value_t = 1)]
    pub tv_seeds: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output path for the whole dataset, or the directory receiving
    /// train/valid/test files with `--split`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 2)]
    pub min_nodes: usize,
    #[arg(long, default_value_t = 10)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub labels: usize,
    #[arg(long, default_value_t = 2.0)]
    pub coupling: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Train/valid/test fractions, e.g. `0.8,0.1,0.1`.
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
}

#[derive(Args, Debug, Serialize)]
pub struct InitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset whose label count and attribute size fix the shapes.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub attr_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = GnnConfig::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub baseline: bool,
    /// All-zero weights, giving uniform factors.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub zeros: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match with_config_file(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Inserts the entries of the `--config` file right after the subcommand
/// name.
fn with_config_file(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut extra = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::format(i + 1, format!("{}: expected key=value, found `{line}`", path.display()))
        })?;
        let key = key.trim().replace('_', "-");
        extra.push(OsString::from(format!("--{key}={}", value.trim())));
    }
    let mut out = args;
    let at = 2.min(out.len());
    out.splice(at..at, extra);
    Ok(out)
}

/// Runs a parsed command; `Ok(false)` means a check failed.
pub fn execute(cli: Cli) -> Result<bool> {
    let common = match &cli.command {
        Command::Train(a) => &a.common,
        Command::Eval(a) => &a.common,
        Command::Decode(a) => &a.common,
        Command::Sample(a) => &a.common,
        Command::OracleCheck(a) => &a.common,
        Command::GenSynthetic(a) => &a.common,
        Command::Init(a) => &a.common,
    };
    let seed = resolve_seed(common.seed)?;
    let jobs = common.jobs.unwrap_or(0);
    print_effective_config(&cli.command, seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Train(a) => cmd_train(a, seed).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Decode(a) => cmd_decode(a).map(|_| true),
        Command::Sample(a) => cmd_sample(a, seed).map(|_| true),
        Command::OracleCheck(a) => cmd_oracle_check(a, seed),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a, seed).map(|_| true),
        Command::Init(a) => cmd_init(a, seed).map(|_| true),
    })
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("NFT_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("NFT_SEED `{v}` is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn print_effective_config(cmd: &Command, seed: u64) {
    let (name, value) = match cmd {
        Command::Train(a) => ("train", serde_json::to_value(a)),
        Command::Eval(a) => ("eval", serde_json::to_value(a)),
        Command::Decode(a) => ("decode", serde_json::to_value(a)),
        Command::Sample(a) => ("sample", serde_json::to_value(a)),
        Command::OracleCheck(a) => ("oracle-check", serde_json::to_value(a)),
        Command::GenSynthetic(a) => ("gen-synthetic", serde_json::to_value(a)),
        Command::Init(a) => ("init", serde_json::to_value(a)),
    };
    let mut flat = Vec::new();
    flatten("", &value.expect("arguments serialize"), &mut flat);
    let mut text = format!("# nft {name}\n");
    for (k, v) in flat {
        let v = if k == "seed" { seed.to_string() } else { v };
        let _ = writeln!(text, "{k}={v}");
    }
    eprint!("{text}");
}

fn flatten(prefix: &str, value: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                flatten(k, v, out);
            }
        }
        serde_json::Value::Null => out.push((prefix.into(), "-".into())),
        serde_json::Value::String(s) => out.push((prefix.into(), s.clone())),
        serde_json::Value::Array(xs) => {
            let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            out.push((prefix.into(), parts.join(",")));
        }
        other => out.push((prefix.into(), other.to_string())),
    }
}

fn load_embeddings(path: Option<&Path>) -> Result<Option<EmbeddingTable>> {
    path.map(EmbeddingTable::load).transpose()
}

fn load_data(path: &Path, embeddings: Option<&EmbeddingTable>) -> Result<Dataset> {
    load_any(path, embeddings)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn default_hidden(attr_size: usize) -> usize {
    attr_size.max(16)
}

fn cmd_train(a: &TrainArgs, seed: u64) -> Result<()> {
    let table = load_embeddings(a.embeddings.as_deref())?;
    let train_set = load_data(&a.train, table.as_ref())?;
    let valid_set = match &a.valid {
        Some(p) => load_data(p, table.as_ref())?,
        None => Dataset {
            num_labels: train_set.num_labels,
            trees: Vec::new(),
        },
    };
    let attr = train_set
        .attr_size()
        .ok_or_else(|| Error::Data(format!("{} contains no trees", a.train.display())))?;
    let model = ModelConfig {
        gnn: GnnConfig::new(a.hidden.unwrap_or(default_hidden(attr)), a.steps, attr)?,
        num_labels: train_set.num_labels,
        baseline: a.baseline,
    };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed,
        early_stop_patience: a.patience,
    };
    let (params, log) = train(&train_set, &valid_set, &model, &cfg)?;
    save_checkpoint(&a.out, &model, &params)?;
    let text = log.to_text();
    if let Some(p) = &a.log {
        fs::write(p, &text).map_err(|e| Error::io(p, e))?;
    }
    write_output(None, &text)
}

fn load_model_and_data(checkpoint: &Path, data: &DataArgs) -> Result<(ModelConfig, ModelParams, Dataset)> {
    let (cfg, params) = load_checkpoint(checkpoint)?;
    let table = load_embeddings(data.embeddings.as_deref())?;
    let ds = load_data(&data.data, table.as_ref())?;
    if ds.num_labels != cfg.num_labels {
        return Err(Error::Data(format!(
            "{} has {} labels but checkpoint {} was built for {}",
            data.data.display(),
            ds.num_labels,
            checkpoint.display(),
            cfg.num_labels
        )));
    }
    if let Some(attr) = ds.attr_size() {
        if attr != cfg.gnn.attr_size {
            return Err(Error::Data(format!(
                "{} has attribute size {attr} but checkpoint {} expects {}",
                data.data.display(),
                checkpoint.display(),
                cfg.gnn.attr_size
            )));
        }
    }
    Ok((cfg, params, ds))
}

pub fn eval_report(m: &crate::training::Metrics) -> String {
    format!(
        "per_node_ll={}\naccuracy={}\nn_trees={}\nn_nodes={}\n",
        m.per_node_ll, m.accuracy, m.n_trees, m.n_nodes
    )
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (cfg, params, ds) = load_model_and_data(&a.checkpoint, &a.data)?;
    let metrics = evaluate(&params, &ds, &cfg)?;
    write_output(a.out.as_deref(), &eval_report(&metrics))
}

fn join_labels(labels: &[usize]) -> String {
    labels.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn model_crfs(cfg: &ModelConfig, params: &ModelParams, ds: &Dataset) -> Result<Vec<TreeCrf>> {
    ds.trees
        .par_iter()
        .map(|t| predict_crf(params, t, cfg))
        .collect()
}

fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    let (cfg, params, ds) = load_model_and_data(&a.checkpoint, &a.data)?;
    let lines: Vec<String> = model_crfs(&cfg, &params, &ds)?
        .par_iter()
        .enumerate()
        .map(|(i, crf)| format!("{i} {}\n", join_labels(&map_decode(crf).0)))
        .collect();
    write_output(a.out.as_deref(), &lines.concat())
}

/// One tree's block of `nft sample` output: a header line, then up to
/// `top_k` lines of `count labels...`, the most frequent marked `mode`.
pub fn histogram_block(id: usize, samples: &[Vec<usize>], top_k: usize) -> String {
    let hist = sample_histogram(samples);
    let mut out = format!("tree {id} samples={} distinct={}\n", samples.len(), hist.len());
    for (rank, (labels, count)) in hist.iter().take(top_k).enumerate() {
        let mark = if rank == 0 { " mode" } else { "" };
        let _ = writeln!(out, "{count} {}{mark}", join_labels(labels));
    }
    out
}

fn cmd_sample(a: &SampleArgs, seed: u64) -> Result<()> {
    let (cfg, params, ds) = load_model_and_data(&a.checkpoint, &a.data)?;
    let crfs = model_crfs(&cfg, &params, &ds)?;
    let blocks = crfs
        .par_iter()
        .enumerate()
        .map(|(i, crf)| {
            let sc = SamplerConfig {
                num_samples: a.samples,
                burn_in: a.burn_in,
                thinning: a.thinning,
                seed: seed.wrapping_add(i as u64),
            };
            Ok(histogram_block(i, &gibbs_sample(crf, &sc)?, a.top_k))
        })
        .collect::<Result<Vec<_>>>()?;
    write_output(a.out.as_deref(), &blocks.concat())
}

fn cmd_oracle_check(a: &OracleCheckArgs, seed: u64) -> Result<bool> {
    let imp = Inference::default();
    let mut outcomes = Vec::new();
    if let Some(path) = &a.crf {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let crf = TreeCrf::from_text(&text)?;
        outcomes.push(checks::check_crf(&crf, 1e-9, &imp));
    } else {
        outcomes.push(checks::check_random_crfs(a.crfs, seed, 1e-9, &imp));
        outcomes.push(checks::check_gradients(a.gradient_instances, seed, 1e-4));
        if a.tv_samples > 0 {
            let seeds: Vec<u64> = (0..a.tv_seeds as u64).map(|s| seed.wrapping_add(s)).collect();
            outcomes.push(checks::check_sampler(a.tv_samples, &seeds, 0.02));
        }
    }
    let mut text = String::new();
    for o in &outcomes {
        let _ = writeln!(text, "{}", o.line());
    }
    let passed = outcomes.iter().all(|o| o.passed);
    let _ = writeln!(text, "{}", if passed { "all checks passed" } else { "some checks FAILED" });
    write_output(None, &text)?;
    Ok(passed)
}

fn cmd_gen_synthetic(a: &GenArgs, seed: u64) -> Result<()> {
    let planted = generate_planted(&PlantedConfig {
        n_trees: a.n_trees,
        min_nodes: a.min_nodes,
        max_nodes: a.max_nodes,
        num_labels: a.labels,
        coupling: a.coupling,
        noise: a.noise,
        seed,
    })?;
    match &a.split {
        None => save_dataset(&a.out, &planted.dataset),
        Some(f) => {
            if f.len() != 3 {
                return Err(Error::Config(format!("--split needs 3 fractions, got {}", f.len())));
            }
            let parts = split(&planted.dataset, [f[0], f[1], f[2]], seed)?;
            fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            save_dataset(&a.out.join("train.json"), &parts.train)?;
            save_dataset(&a.out.join("valid.json"), &parts.valid)?;
            save_dataset(&a.out.join("test.json"), &parts.test)
        }
    }
}

fn cmd_init(a: &InitArgs, seed: u64) -> Result<()> {
    let ds = match &a.data {
        Some(p) => {
            let table = load_embeddings(a.embeddings.as_deref())?;
            Some(load_data(p, table.as_ref())?)
        }
        None => None,
    };
    let labels = a
        .labels
        .or(ds.as_ref().map(|d| d.num_labels))
        .ok_or_else(|| Error::Config("init needs --labels or --data".into()))?;
    let attr = a
        .attr_size
        .or(ds.as_ref().and_then(Dataset::attr_size))
        .ok_or_else(|| Error::Config("init needs --attr-size or a non-empty --data".into()))?;
    let cfg = ModelConfig {
        gnn: GnnConfig::new(a.hidden.unwrap_or(default_hidden(attr)), a.steps, attr)?,
        num_labels: labels,
        baseline: a.baseline,
    };
    cfg.validate()?;
    let params = if a.zeros {
        ModelParams::zeros(&cfg)
    } else {
        ModelParams::init(&cfg, seed)
    };
    save_checkpoint(&a.out, &cfg, &params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_file_entries_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# defaults\nepochs = 3\nbatch_size=4\nbaseline=true\n").unwrap();
        let args = with_config_file(os(&[
            "nft", "train", "--config", cfg.to_str().unwrap(), "--epochs", "7", "--train", "t", "--out", "o",
        ]))
        .unwrap();
        let cli = Cli::try_parse_from(args).unwrap();
        let Command::Train(t) = cli.command else { panic!() };
        assert_eq!((t.epochs, t.batch_size, t.baseline), (7, 4, true));
    }

    #[test]
    fn bad_config_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.cfg");
        fs::write(&cfg, "epochs\n").unwrap();
        let err = with_config_file(os(&["nft", "train", "--config", cfg.to_str().unwrap()])).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn histogram_block_layout() {
        let samples = vec![vec![1, 0], vec![1, 0], vec![0, 0]];
        assert_eq!(
            histogram_block(3, &samples, 5),
            "tree 3 samples=3 distinct=2\n2 1 0 mode\n1 0 0\n"
        );
        assert_eq!(histogram_block(0, &samples, 0), "tree 0 samples=3 distinct=2\n");
    }

    #[test]
    fn seed_flag_wins_over_environment() {
        assert_eq!(resolve_seed(Some(9)).unwrap(), 9);
    }
}
