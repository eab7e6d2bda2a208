//! Argument parsing and dispatch.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::{clean, evaluate, simulate, train};
use crate::config::{ConfigError, RunConfig};
use crate::Reporter;

#[derive(Debug, Parser)]
#[command(name = "lstmica", version, about = "EOG artifact removal: LSTM estimation + ICA rejection")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory of the command.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a semi-simulated dataset.
    Simulate(SimulateArgs),
    /// Train the EOG estimator on the training subjects.
    Train(TrainArgs),
    /// Remove EOG from a recording or from the held-out subjects.
    Clean(CleanArgs),
    /// Compare cleaned recordings with the ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub subjects: Option<u64>,
    /// Recording length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Train a one-input model on this channel.
    #[arg(long, value_name = "LABEL")]
    pub single_channel: Option<String>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    /// Model file or training output directory.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Recording to clean.
    #[arg(long, value_name = "CSV", conflicts_with = "data")]
    pub input: Option<PathBuf>,
    /// Dataset whose held-out subjects are cleaned.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Correlation at or above which a source is removed.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Clean only this channel (the model must have one input).
    #[arg(long, value_name = "LABEL")]
    pub single_channel: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output directory of `clean`.
    #[arg(long, value_name = "DIR")]
    pub cleaned: Option<PathBuf>,
    /// Dataset with the ground truth.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Simulate(a) => {
            if let Some(n) = a.subjects {
                cfg.simulate.subjects = n as usize;
            }
            if let Some(d) = a.duration {
                cfg.simulate.duration_s = d;
            }
            if let Some(o) = &cli.out {
                cfg.paths.dataset = o.clone();
            }
        }
        Command::Train(a) => {
            set(&mut cfg.train.epochs, a.epochs);
            set(&mut cfg.train.batch_size, a.batch_size);
            set(&mut cfg.train.patience, a.patience);
            set(&mut cfg.train.test_fraction, a.test_fraction);
            if a.single_channel.is_some() {
                cfg.train.single_channel = a.single_channel.clone();
            }
            if let Some(d) = &a.data {
                cfg.paths.dataset = d.clone();
            }
            if let Some(o) = &cli.out {
                cfg.paths.model = o.clone();
            }
        }
        Command::Clean(a) => {
            set(&mut cfg.clean.threshold, a.threshold);
            if a.single_channel.is_some() {
                cfg.clean.single_channel = a.single_channel.clone();
            }
            if let Some(m) = &a.model {
                cfg.paths.model = m.clone();
            }
            if let Some(d) = &a.data {
                cfg.paths.dataset = d.clone();
            }
            if let Some(o) = &cli.out {
                cfg.paths.cleaned = o.clone();
            }
        }
        Command::Evaluate(a) => {
            if let Some(c) = &a.cleaned {
                cfg.paths.cleaned = c.clone();
            }
            if let Some(d) = &a.data {
                cfg.paths.dataset = d.clone();
            }
            if let Some(o) = &cli.out {
                cfg.paths.evaluation = o.clone();
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let rep = Reporter { quiet: cli.quiet };
    match &cli.command {
        Command::Simulate(_) => {
            simulate::run(&cfg, &cfg.paths.dataset, &rep)?;
        }
        Command::Train(_) => {
            train::run(&cfg, &cfg.paths.dataset, &cfg.paths.model, &rep)?;
        }
        Command::Clean(a) => {
            let input = match &a.input {
                Some(p) => clean::CleanInput::File(p.clone()),
                None => clean::CleanInput::Dataset(cfg.paths.dataset.clone()),
            };
            clean::run(&cfg, &cfg.paths.model, &input, &cfg.paths.cleaned, &rep)?;
        }
        Command::Evaluate(_) => {
            if cfg.paths.cleaned == cfg.paths.evaluation {
                bail!(ConfigError("evaluation output must differ from the cleaned directory".into()));
            }
            evaluate::run(&cfg, &cfg.paths.cleaned, &cfg.paths.dataset, &cfg.paths.evaluation, &rep)?;
        }
    }
    Ok(())
}
