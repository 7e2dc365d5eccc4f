//! `sc` — end-to-end pipeline for multi-blank sentence-completion solving:
//! data generation, vocab building, denoising pretraining, binary-head
//! fine-tuning, solving with threshold abstention, and evaluation.
//!
//! Exit codes: 0 success; 2 missing or incompatible artifacts / bad usage;
//! 3 internal numeric failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sc_core::error::Error;
use sc_core::tensorcore::Dtype;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "sc", version, about = "Sentence-completion question solver pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct CommonOpts {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Input data file(s); comma-separated where a command accepts several.
    #[arg(long)]
    data: Option<String>,
    /// Vocabulary file.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Input weight file.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Primary output path (directory for gen-data).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Abstention threshold tau in [0,1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Threshold grid step for pr-sweep.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Minimum token frequency for build-vocab.
    #[arg(long)]
    min_freq: Option<usize>,
    /// Float width of the model parameters.
    #[arg(long, value_parser = ["f32", "f64"])]
    precision: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate synthetic question datasets and a pretraining corpus.
    GenData(CommonOpts),
    /// Build a vocabulary from datasets and/or text corpora.
    BuildVocab(CommonOpts),
    /// Denoising pretraining from random init.
    Pretrain(CommonOpts),
    /// Fine-tune the classification head (and body) on labeled candidates.
    Finetune(CommonOpts),
    /// Solve questions, emitting one decision record per line.
    Solve(CommonOpts),
    /// Evaluate accuracy overall and per category.
    Eval(CommonOpts),
    /// Precision/recall sweep over the threshold grid.
    PrSweep(CommonOpts),
}

fn merged_config(opts: &CommonOpts) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(opts.config.as_deref())?;
    cfg.set_opt("seed", opts.seed);
    cfg.set_opt("threshold", opts.threshold);
    cfg.set_opt("grid_step", opts.grid_step);
    cfg.set_opt("min_freq", opts.min_freq);
    cfg.set_opt("precision", opts.precision.clone());
    Ok(cfg)
}

fn require<T: Clone>(opt: &Option<T>, flag: &str) -> Result<T, Error> {
    opt.clone()
        .ok_or_else(|| Error::Config(format!("missing required flag {flag}")))
}

fn data_paths(opts: &CommonOpts) -> Result<Vec<PathBuf>, Error> {
    let raw = require(&opts.data, "--data")?;
    let paths: Vec<PathBuf> = raw
        .split(',')
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect();
    if paths.is_empty() {
        return Err(Error::Config("--data lists no files".into()));
    }
    for p in &paths {
        if !p.exists() {
            return Err(Error::Config(format!("data file {} not found", p.display())));
        }
    }
    Ok(paths)
}

fn one_data_path(opts: &CommonOpts) -> Result<PathBuf, Error> {
    let paths = data_paths(opts)?;
    let [path] = paths.as_slice() else {
        return Err(Error::Config("this command takes exactly one --data file".into()));
    };
    Ok(path.clone())
}

/// Dtype for commands that read a weight file: the stored dtype, which any
/// explicit --precision/config setting must match.
fn stored_dtype(cfg: &RunConfig, weights: &std::path::Path) -> Result<Dtype, Error> {
    let requested = if cfg.has("precision") {
        Some(cfg.precision()?)
    } else {
        None
    };
    commands::weights_dtype(weights, requested)
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.cmd {
        Cmd::GenData(o) => {
            let cfg = merged_config(o)?;
            commands::gen_data(&cfg, &require(&o.out, "--out")?)
        }
        Cmd::BuildVocab(o) => {
            let cfg = merged_config(o)?;
            commands::build_vocab_cmd(&cfg, &data_paths(o)?, &require(&o.out, "--out")?)
        }
        Cmd::Pretrain(o) => {
            let cfg = merged_config(o)?;
            let (data, vocab, out) = (
                one_data_path(o)?,
                require(&o.vocab, "--vocab")?,
                require(&o.out, "--out")?,
            );
            match cfg.precision()? {
                Dtype::F32 => commands::pretrain_cmd::<f32>(&cfg, &data, &vocab, &out),
                Dtype::F64 => commands::pretrain_cmd::<f64>(&cfg, &data, &vocab, &out),
            }
        }
        Cmd::Finetune(o) => {
            let cfg = merged_config(o)?;
            let (data, vocab, weights, out) = (
                one_data_path(o)?,
                require(&o.vocab, "--vocab")?,
                require(&o.weights, "--weights")?,
                require(&o.out, "--out")?,
            );
            match stored_dtype(&cfg, &weights)? {
                Dtype::F32 => commands::finetune_cmd::<f32>(&cfg, &data, &vocab, &weights, &out),
                Dtype::F64 => commands::finetune_cmd::<f64>(&cfg, &data, &vocab, &weights, &out),
            }
        }
        Cmd::Solve(o) => {
            let cfg = merged_config(o)?;
            let (data, vocab, weights, out) = (
                one_data_path(o)?,
                require(&o.vocab, "--vocab")?,
                require(&o.weights, "--weights")?,
                require(&o.out, "--out")?,
            );
            match stored_dtype(&cfg, &weights)? {
                Dtype::F32 => commands::solve_cmd::<f32>(&cfg, &data, &vocab, &weights, &out),
                Dtype::F64 => commands::solve_cmd::<f64>(&cfg, &data, &vocab, &weights, &out),
            }
        }
        Cmd::Eval(o) => {
            let cfg = merged_config(o)?;
            let (data, vocab, weights, out) = (
                one_data_path(o)?,
                require(&o.vocab, "--vocab")?,
                require(&o.weights, "--weights")?,
                require(&o.out, "--out")?,
            );
            match stored_dtype(&cfg, &weights)? {
                Dtype::F32 => commands::eval_cmd::<f32>(&cfg, &data, &vocab, &weights, &out),
                Dtype::F64 => commands::eval_cmd::<f64>(&cfg, &data, &vocab, &weights, &out),
            }
        }
        Cmd::PrSweep(o) => {
            let cfg = merged_config(o)?;
            let (data, vocab, weights, out) = (
                one_data_path(o)?,
                require(&o.vocab, "--vocab")?,
                require(&o.weights, "--weights")?,
                require(&o.out, "--out")?,
            );
            match stored_dtype(&cfg, &weights)? {
                Dtype::F32 => commands::pr_sweep_cmd::<f32>(&cfg, &data, &vocab, &weights, &out),
                Dtype::F64 => commands::pr_sweep_cmd::<f64>(&cfg, &data, &vocab, &weights, &out),
            }
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite { .. } | Error::Shape { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
