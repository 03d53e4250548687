//! Experiment runner for the `imbassl` engine.

pub mod commands;
pub mod config;
pub mod error;
pub mod methods;
pub mod runner;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use imbassl::losses::Blending;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use methods::Method;

/// Environment variable that replaces the configured seed list.
pub const SEED_ENV: &str = "IMBASSL_SEED";

#[derive(Debug, Parser)]
#[command(name = "imba-ssl", version, about = "Class-imbalance-aware semi-supervised training experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Experiment config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for CSV/JSON/checkpoint outputs.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the configured method on every seed.
    Train(#[command(flatten)] Common),
    /// Score saved checkpoints on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Use this checkpoint for every seed instead of the trained ones.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare methods side by side.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names.
        #[arg(long, default_value = "supervised,uda,uda-abcl")]
        methods: String,
    },
    /// Vary the ABCL compensation strength.
    SweepGamma {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "0.2,0.4,0.6,0.8,1.0")]
        gammas: String,
        #[arg(long, value_enum, default_value_t = BlendingArg::Always)]
        blending: BlendingArg,
    },
    /// Weak versus strong perturbation for uda and ABCL.
    AblateAug(#[command(flatten)] Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BlendingArg {
    Always,
    Selective,
    Both,
}

impl BlendingArg {
    pub fn modes(self) -> Vec<Blending> {
        match self {
            BlendingArg::Always => vec![Blending::AlwaysOn],
            BlendingArg::Selective => vec![Blending::Selective],
            BlendingArg::Both => vec![Blending::AlwaysOn, Blending::Selective],
        }
    }
}

pub fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| {
            Method::from_name(name).ok_or_else(|| {
                CliError::Usage(format!("unknown method `{name}`; valid: {}", Method::names().join(", ")))
            })
        })
        .collect()
}

/// Parses a seed override such as `7` or `1,2,3`.
pub fn parse_seeds(value: &str) -> CliResult<Vec<u64>> {
    let seeds = config::parse_list::<u64>(value)
        .map_err(|bad| CliError::Usage(format!("{SEED_ENV}: cannot parse seed `{bad}`")))?;
    if seeds.is_empty() {
        return Err(CliError::Usage(format!("{SEED_ENV} is empty")));
    }
    Ok(seeds)
}

fn load(common: &Common, seed_override: Option<&str>) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = seed_override {
        cfg.seeds = parse_seeds(s)?;
    }
    Ok(cfg)
}

/// Runs one command and returns the human-readable report.
pub fn run(cli: &Cli, seed_override: Option<&str>) -> CliResult<String> {
    match &cli.command {
        Command::Train(common) => {
            let cfg = load(common, seed_override)?;
            let s = commands::train(&cfg, &common.out)?;
            Ok(format!(
                "{}: UAR {:.4} ± {:.4}, G-mean {:.4}, AUC {:.4} over {} seeds\n",
                s.method,
                s.mean.uar,
                s.std.uar,
                s.mean.g_mean,
                s.mean.avg_auc,
                s.per_seed.len()
            ))
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = load(common, seed_override)?;
            let e = commands::evaluate_checkpoints(&cfg, &common.out, checkpoint.as_deref())?;
            Ok(e.per_seed
                .iter()
                .map(|s| format!("seed {}: UAR {:.4}, G-mean {:.4}, AUC {:.4}\n", s.seed, s.metrics.uar, s.metrics.g_mean, s.metrics.avg_auc))
                .collect())
        }
        Command::Compare { common, methods } => {
            let methods = parse_methods(methods)?;
            let cfg = load(common, seed_override)?;
            Ok(commands::compare(&cfg, &methods, &common.out)?.to_text())
        }
        Command::SweepGamma {
            common,
            gammas,
            blending,
        } => {
            let gammas = config::parse_list::<f64>(gammas)
                .map_err(|bad| CliError::Usage(format!("cannot parse gamma `{bad}`")))?;
            commands::check_gammas(&gammas)?;
            let cfg = load(common, seed_override)?;
            Ok(commands::sweep_gamma(&cfg, &gammas, &blending.modes(), &common.out)?.to_text())
        }
        Command::AblateAug(common) => {
            let cfg = load(common, seed_override)?;
            Ok(commands::ablate_aug(&cfg, &common.out)?.to_text())
        }
    }
}
