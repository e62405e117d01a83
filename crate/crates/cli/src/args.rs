use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Parser, Serialize)]
#[command(name = "lrd", version, about = "Local regression distribution estimators")]
pub struct Cli {
    /// key = value file supplying defaults for the subcommand's options
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Pointwise estimates and confidence intervals on a grid
    Fit(FitArgs),
    /// Uniform confidence band on a grid
    Band(BandArgs),
    /// Asymptotic variance tables and equivalent kernels
    Efficiency(EfficiencyArgs),
    /// Append program-evaluation weights to a CSV
    Weights(WeightsArgs),
    /// Scaled subgroup densities for the IV validity inequality
    Ivcheck(IvcheckArgs),
    /// Monte Carlo experiments
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct InputArgs {
    /// Input CSV with a header row
    #[arg(short, long)]
    pub input: PathBuf,
    /// Outcome column
    #[arg(long, default_value = "x")]
    pub x_col: String,
    /// Optional weight column
    #[arg(long)]
    pub weight_col: Option<String>,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct OutputArgs {
    /// Output CSV (stdout when omitted)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// JSON sidecar (defaults to <output>.json when --output is given)
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct EstimatorArgs {
    /// lr (local regression) or l2 (local L2 with Lebesgue design on --support)
    #[arg(long, default_value = "lr")]
    pub method: String,
    #[arg(long, default_value = "triangular")]
    pub kernel: String,
    /// Polynomial order
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Redundant regressor index j for the minimum-distance estimator
    #[arg(long)]
    pub q: Option<u32>,
    /// Bandwidth, or "rot" for the rule of thumb
    #[arg(long, default_value = "rot")]
    pub h: String,
    /// -1 for the CDF, 0 for the density, k for the k-th derivative
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub deriv: i32,
    /// Inference from order p + 1 (robust bias correction)
    #[arg(long)]
    pub robust: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Support "lo,hi" for the l2 method
    #[arg(long, allow_hyphen_values = true)]
    pub support: Option<String>,
    /// Evaluation grid: "a:b:n" or a comma-separated list
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub est: EstimatorArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct BandOptions {
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// coef or md
    #[arg(long, default_value = "coef")]
    pub target: String,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct BandArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub est: EstimatorArgs,
    #[command(flatten)]
    pub band: BandOptions,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct EfficiencyArgs {
    /// sa (variance table), md (closed forms against quadrature) or kernel (equivalent kernel)
    #[arg(long, default_value = "sa")]
    pub table: String,
    #[arg(long, default_value = "uniform")]
    pub kernel: String,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub deriv: usize,
    /// Redundant indices, comma-separated
    #[arg(long, default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub j: String,
    /// Number of grid points for kernel tabulation
    #[arg(long, default_value_t = 257)]
    pub points: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct WeightsArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// subgroup1, subgroup0, counterfactual, iv00, iv10, complier, complier0 or complier1
    #[arg(long)]
    pub scheme: String,
    #[arg(long, default_value = "t")]
    pub treatment_col: String,
    #[arg(long, default_value = "d")]
    pub instrument_col: String,
    /// Covariate columns, comma-separated
    #[arg(long, default_value = "")]
    pub covariates: String,
    /// Power expansion order of each covariate
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Name of the appended column
    #[arg(long, default_value = "weight")]
    pub weight_name: String,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct IvcheckArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long, default_value = "x")]
    pub x_col: String,
    #[arg(long, default_value = "t")]
    pub treatment_col: String,
    #[arg(long, default_value = "d")]
    pub instrument_col: String,
    #[command(flatten)]
    pub est: EstimatorArgs,
    #[command(flatten)]
    pub band: BandOptions,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct SimulateArgs {
    /// pointwise, uniform or efficiency
    #[arg(long, default_value = "pointwise")]
    pub experiment: String,
    /// gaussian, exponential, uniform or kinked
    #[arg(long, default_value = "gaussian")]
    pub dgp: String,
    /// Comma-separated DGP parameters (defaults: 0,1 / 1 / 0,1 / 0.7,0.4)
    #[arg(long, allow_hyphen_values = true)]
    pub dgp_params: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    /// Evaluation point for pointwise and efficiency experiments
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    /// Redundant indices for the efficiency experiment
    #[arg(long, default_value = "1,2")]
    pub j: String,
    #[command(flatten)]
    pub est: EstimatorArgs,
    #[command(flatten)]
    pub band: BandOptions,
    #[command(flatten)]
    pub out: OutputArgs,
}
