use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use triprobit::inference::CovarianceKind;
use triprobit::{GhkConfig, SequenceKind};

#[derive(Debug, Parser)]
#[command(name = "triprobit", version, about = "Recursive trivariate probit estimation by simulated maximum likelihood")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and write the result document and tables.
    Estimate(EstimateArgs),
    /// Average partial effects from a saved result.
    Ape(ApeArgs),
    /// Means and standard deviations of selected columns.
    Describe(DescribeArgs),
    /// Simulate a dataset from a data generating process.
    Simulate(SimulateArgs),
    /// Monte Carlo parameter recovery.
    Recover(RecoverArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sequence {
    Halton,
    Prng,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GhkArgs {
    /// GHK draws per observation.
    #[arg(long, default_value_t = 200)]
    pub draws: usize,

    /// Seed for the simulation draws.
    #[arg(long, default_value_t = 12_345)]
    pub seed: u64,

    /// Pair every draw with its antithetic counterpart.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub antithetic: bool,

    #[arg(long, value_enum, default_value_t = Sequence::Halton)]
    pub sequence: Sequence,
}

impl GhkArgs {
    pub fn config(&self) -> GhkConfig {
        GhkConfig {
            draws: self.draws,
            kind: match self.sequence {
                Sequence::Halton => SequenceKind::Halton,
                Sequence::Prng => SequenceKind::Prng,
            },
            seed: self.seed,
            antithetic: self.antithetic,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,

    /// Variable dictionary (TOML).
    #[arg(long)]
    pub codebook: PathBuf,

    /// Sample filters (TOML).
    #[arg(long)]
    pub filters: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Model specification (TOML).
    #[arg(long)]
    pub spec: PathBuf,

    #[command(flatten)]
    pub ghk: GhkArgs,

    /// Cluster column, overriding the specification.
    #[arg(long)]
    pub cluster_col: Option<String>,

    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,

    #[arg(long, default_value_t = 1e-5)]
    pub tol_grad: f64,

    /// Drop the employment equation and fit the two-equation model.
    #[arg(long)]
    pub bivariate: bool,

    /// Draws for the final log-likelihood and covariance; 0 reuses the
    /// estimation draws.
    #[arg(long, default_value_t = 2000)]
    pub final_draws: usize,

    /// Output directory; existing outputs are never overwritten.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ApeArgs {
    /// Result document written by `estimate`.
    #[arg(long)]
    pub result: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Effect requests (TOML).
    #[arg(long)]
    pub effects: PathBuf,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Columns to describe (default: all).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// DGP file (TOML); the built-in desk DGP when absent.
    #[arg(long)]
    pub dgp: Option<PathBuf>,

    #[arg(long)]
    pub n: Option<usize>,

    /// Overrides the DGP seed.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalCovariance {
    None,
    Opg,
    Hessian,
    Robust,
    Clustered,
}

impl IntervalCovariance {
    pub fn kind(self) -> Option<CovarianceKind> {
        match self {
            Self::None => None,
            Self::Opg => Some(CovarianceKind::Opg),
            Self::Hessian => Some(CovarianceKind::Hessian),
            Self::Robust => Some(CovarianceKind::Robust),
            Self::Clustered => Some(CovarianceKind::Clustered),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RecoverArgs {
    #[arg(long)]
    pub dgp: Option<PathBuf>,

    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long, default_value_t = 10)]
    pub reps: usize,

    /// Overrides the DGP seed.
    #[arg(long)]
    pub dgp_seed: Option<u64>,

    #[command(flatten)]
    pub ghk: GhkArgs,

    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,

    #[arg(long, default_value_t = 1e-5)]
    pub tol_grad: f64,

    /// Covariance for interval coverage.
    #[arg(long, value_enum, default_value_t = IntervalCovariance::Opg)]
    pub covariance: IntervalCovariance,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}
