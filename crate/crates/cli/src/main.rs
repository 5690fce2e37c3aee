//! `lcvb`: fit, decide, run the consistency experiment, or run the identity suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lcvb_core::Rule;

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(name = "lcvb", version, about = "Naive and loss-calibrated variational Bayes for the newsvendor")]
pub struct Cli {
    /// JSON config file; unknown keys are rejected.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed. Overrides the config file.
    #[arg(long, global = true, env = "SEED", value_name = "U64")]
    pub seed: Option<u64>,
    /// Output stem; `experiment` writes `<stem>.csv` and `<stem>.manifest.json`.
    #[arg(long, global = true, value_name = "STEM")]
    pub out: Option<PathBuf>,
    /// Worker threads for `experiment`.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the NVB posterior, or the LCVB posterior at a fixed action.
    Fit(FitArgs),
    /// Choose an action with the NVB, LCVB, or exact Bayes rule.
    Decide(DecideArgs),
    /// Run the replicated consistency experiment.
    Experiment(ExperimentArgs),
    /// Run the numerical identity suite.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Inline demand observations.
    #[arg(long, value_delimiter = ',', value_name = "X,..")]
    pub values: Option<Vec<f64>>,
    /// File of demand observations.
    #[arg(long, value_name = "PATH")]
    pub data_file: Option<PathBuf>,
    /// True demand rate (synthetic data and gap reporting).
    #[arg(long)]
    pub theta0: Option<f64>,
    /// Synthetic sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Holding cost.
    #[arg(long)]
    pub h: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fit the loss-calibrated posterior at this action.
    #[arg(long, value_name = "A")]
    pub calibrate: Option<f64>,
    /// Replace the risk with a positive constant (test hook).
    #[arg(long, hide = true, requires = "calibrate", value_name = "C")]
    pub constant_risk: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_rule, value_name = "nvb|lcvb|bayes")]
    pub rule: Rule,
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    match s.parse::<Rule>() {
        Ok(Rule::OracleTrue) | Err(_) => Err(format!("unknown rule `{s}`; expected nvb, lcvb or bayes")),
        Ok(r) => Ok(r),
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Reduced-scale reproduction settings (200 paths).
    #[arg(long, conflicts_with = "full_scale")]
    pub paper_defaults: bool,
    /// Full-scale reproduction settings (1000 paths).
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Quantile level of the reported gaps.
    #[arg(long)]
    pub quantile: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Corrupt the KL identity (test hook).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    /// A check failed; the report is already printed.
    Property(usize),
}

impl From<lcvb_core::Error> for CliError {
    fn from(e: lcvb_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Property(n)) => {
            eprintln!("error: {n} propert{} failed", if n == 1 { "y" } else { "ies" });
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
