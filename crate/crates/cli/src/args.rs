use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlpflow::integrate::Method;

#[derive(Debug, Parser)]
#[command(
    name = "nlpflow",
    version,
    about = "Solve constrained nonlinear programs by integrating their optimization flow"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the flow from one start point.
    Run(RunArgs),
    /// Integrate from several sampled start points and tabulate the errors.
    Multistart(MultistartArgs),
    /// List the built-in problems.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rk45,
    Stiff,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Rk45 => Method::ExplicitRk45,
            MethodArg::Stiff => Method::Stiff,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Built-in problem name, or a path to a problem file.
    #[arg(long)]
    pub problem: String,
    /// Size of a resizable built-in problem.
    #[arg(long)]
    pub size: Option<usize>,
    /// Start point: `v1,v2,...` or `sample:lo,hi[;i=v...]`.
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: String,
    #[arg(long, default_value_t = 0.1)]
    pub k_theta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub k_h: f64,
    #[arg(long, default_value_t = 0.1)]
    pub k_g: f64,
    /// JSON file with `k_theta`, `k_h`, `k_g` as scalars or full arrays.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Rk45)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub abs_tol: f64,
    #[arg(long, default_value_t = 100.0)]
    pub t_end: f64,
    /// Keep integrating to `t_end` after convergence.
    #[arg(long)]
    pub fixed_horizon: bool,
    /// Priority groups of inequality rows, e.g. `1,2,3;4,5`.
    #[arg(long)]
    pub pts: Option<String>,
    /// Extra trajectory samples at multiples of this stride.
    #[arg(long)]
    pub sample_stride: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Directory for the trajectory CSV and JSON summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct MultistartArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
}
