use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Gibbs sampling and convergence-rate estimation for the one-way linear
/// mixed model.
///
/// Every subcommand resolves its configuration as defaults, then the JSON
/// file given by `--config` (a previous `manifest.json` also works), then the
/// flags on the command line.
#[derive(Parser, Debug)]
#[command(name = "mixedgibbs", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic data set, or one per q with --q-list.
    Gen(GenArgs),
    /// Audit a data set against the growth-regime assumptions.
    Check(CheckArgs),
    /// Run the Gibbs chain and dump its trajectory.
    Sample(SampleArgs),
    /// Estimate the drift constants (zeta, L).
    Drift(DriftArgs),
    /// Estimate the contraction factors inside and outside the small set.
    Contract(ContractArgs),
    /// Coupled-chain Wasserstein upper-bound curve.
    Wcurve(WcurveArgs),
    /// Optimize the convergence rate from drift and contraction constants.
    Rate(RateArgs),
    /// Full scaling study over a sequence of growing data sets.
    Scale(ScaleArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Check(_) => "check",
            Command::Sample(_) => "sample",
            Command::Drift(_) => "drift",
            Command::Contract(_) => "contract",
            Command::Wcurve(_) => "wcurve",
            Command::Rate(_) => "rate",
            Command::Scale(_) => "scale",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Gen(a) => &a.common,
            Command::Check(a) => &a.common,
            Command::Sample(a) => &a.common,
            Command::Drift(a) => &a.common,
            Command::Contract(a) => &a.common,
            Command::Wcurve(a) => &a.common,
            Command::Rate(a) => &a.common,
            Command::Scale(a) => &a.common,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file or manifest to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "mixedgibbs-out")]
    pub out: PathBuf,
    /// Skip the SVG plots.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub a1: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub a2: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// All coordinates zero.
    Zero,
    /// The minimizer of the drift function.
    Center,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub q: Option<usize>,
    /// Generate one data set per q (strictly increasing, comma separated).
    #[arg(long, value_delimiter = ',')]
    pub q_list: Option<Vec<usize>>,
    /// Fixed covariate dimension.
    #[arg(long, conflicts_with = "p_prop")]
    pub p: Option<usize>,
    /// p = ceil(c q).
    #[arg(long)]
    pub p_prop: Option<f64>,
    /// Every group has this many rows.
    #[arg(long, conflicts_with = "growth_m")]
    pub balanced_r: Option<usize>,
    /// Growth rule r = round(q^(2+delta+epsilon)) with size ratio at most m.
    #[arg(long)]
    pub growth_m: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// One value (broadcast) or p values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub covariate_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_cap: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub m_max: Option<f64>,
    #[arg(long)]
    pub k1_min: Option<f64>,
    #[arg(long)]
    pub k2_max: Option<f64>,
    #[arg(long)]
    pub ell_max: Option<f64>,
    #[arg(long)]
    pub p_over_q_max: Option<f64>,
    #[arg(long)]
    pub growth_min: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, value_enum)]
    pub start: Option<Start>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write full states to trajectory.bin.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug)]
pub struct DriftArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ContractArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Threshold for V(a) + V(b); defaults to q^(delta/3).
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub reps_per_pair: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct WcurveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, value_enum)]
    pub start: Option<Start>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub c_norm: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Also assemble the total-variation bound after this many steps.
    #[arg(long)]
    pub tv_n: Option<usize>,
    #[arg(long)]
    pub tv_q: Option<usize>,
    /// Kernel-Lipschitz conversion scale.
    #[arg(long)]
    pub tv_scale: Option<f64>,
    /// V at the starting state.
    #[arg(long)]
    pub v_eta: Option<f64>,
    #[arg(long)]
    pub l0: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_delimiter = ',')]
    pub q_list: Option<Vec<usize>>,
    /// Growth exponent, used both for generation and for xi = q^(delta/3).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub growth_m: Option<f64>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub drift_reps: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub reps_per_pair: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub w_n_max: Option<usize>,
    #[arg(long)]
    pub w_reps: Option<usize>,
    #[arg(long)]
    pub c_norm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for the generated data sets.
    #[arg(long)]
    pub gen_seed: Option<u64>,
}
