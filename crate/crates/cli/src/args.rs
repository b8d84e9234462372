use ascca::alm::{AlmConfig, InitStrategy};
use ascca::problem::{PreprocessOptions, DEFAULT_ALPHA};
use ascca::rbb::BbConvention;
use ascca::select::{default_b_grid, CvPlan};
use ascca::AsccaError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "ascca", version, about = "Adaptive sparse CCA with trace-Lasso penalties")]
pub struct Cli {
    /// Seed for fold assignment, random starts and simulated data
    /// (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for CV cells and replicates (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for output files; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Print one JSON line per outer iteration (solve) or per replicate
    /// (simulate) to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one problem from CSV data.
    Solve(SolveArgs),
    /// Cross-validate the penalty scale b on CSV data.
    Cv(CvArgs),
    /// Replicated simulation: generate, select b, solve, score.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// CSV file with the X block (header line, one observation per row).
    #[arg(long)]
    pub x: PathBuf,
    /// CSV file with the Y block.
    #[arg(long)]
    pub y: PathBuf,
    /// Number of canonical pairs.
    #[arg(long, default_value_t = 2)]
    pub r: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BbArg {
    Classical,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Spectral,
    Random,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Scale centered columns to unit norm.
    #[arg(long, value_enum, default_value = "on")]
    pub normalize: OnOff,
    /// Metric regularization: (1 - alpha) X^T X + alpha I.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
}

impl PreprocessArgs {
    pub fn options(&self) -> PreprocessOptions {
        PreprocessOptions {
            normalize: self.normalize == OnOff::On,
            alpha: self.alpha,
        }
    }
}

#[derive(Args, Debug)]
pub struct SolverArgs {
    /// Initial penalty (default: largest eigenvalue of the two metrics).
    #[arg(long)]
    pub rho0: Option<f64>,
    #[arg(long, default_value_t = 0.99)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.05)]
    pub gamma: f64,
    /// Stop when max(||R1||_F^2, ||R2||_F^2) falls below this.
    #[arg(long, default_value_t = 1e-8)]
    pub outer_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 100)]
    pub inner_max: usize,
    /// Floor of the inner tolerance schedule.
    #[arg(long, default_value_t = 1e-3)]
    pub eps_min: f64,
    /// Multipliers are clipped to [-clip, clip].
    #[arg(long, default_value_t = 100.0)]
    pub clip: f64,
    #[arg(long, value_enum, default_value = "classical")]
    pub bb_convention: BbArg,
    /// Stop on the residual test alone, without the stationarity check.
    #[arg(long)]
    pub residual_only: bool,
}

impl SolverArgs {
    pub fn config(&self) -> AlmConfig<f64> {
        let mut cfg = AlmConfig {
            rho0: self.rho0,
            tau: self.tau,
            gamma: self.gamma,
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            inner_max: self.inner_max,
            eps_min: self.eps_min,
            clip_lo: -self.clip,
            clip_hi: self.clip,
            require_stationarity: !self.residual_only,
            ..AlmConfig::default()
        };
        cfg.rbb.bb_convention = match self.bb_convention {
            BbArg::Classical => BbConvention::Classical,
            BbArg::Paper => BbConvention::Paper,
        };
        cfg
    }
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    pub kappa: usize,
    /// Comma-separated candidate values of b (default: 11 log-spaced
    /// values in [0.05, 2]).
    #[arg(long, value_delimiter = ',')]
    pub b_grid: Option<Vec<f64>>,
    /// Score folds by absolute held-out correlations.
    #[arg(long)]
    pub absolute_scores: bool,
}

impl PlanArgs {
    pub fn plan(&self, seed: u64) -> CvPlan {
        CvPlan {
            kappa: self.kappa,
            b_grid: self.b_grid.clone().unwrap_or_else(default_b_grid),
            seed,
            absolute_scores: self.absolute_scores,
        }
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Penalty on the X loadings; give both or neither. Without them b is
    /// chosen by cross-validation first.
    #[arg(long)]
    pub lambda_u: Option<f64>,
    #[arg(long)]
    pub lambda_v: Option<f64>,
    #[arg(long, value_enum, default_value = "spectral")]
    pub init: InitArg,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
}

impl SolveArgs {
    pub fn lambdas(&self) -> Result<Option<(f64, f64)>, AsccaError> {
        match (self.lambda_u, self.lambda_v) {
            (Some(u), Some(v)) => Ok(Some((u, v))),
            (None, None) => Ok(None),
            _ => Err(AsccaError::InvalidConfig(
                "give both --lambda-u and --lambda-v, or neither".into(),
            )),
        }
    }

    pub fn init_strategy(&self) -> InitStrategy {
        match self.init {
            InitArg::Spectral => InitStrategy::Spectral,
            InitArg::Random => InitStrategy::Random,
        }
    }
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Identity,
    Toeplitz,
    Corr,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Read the whole sweep configuration from a JSON file instead of the
    /// flags below. Unknown keys are rejected; --seed still applies.
    #[arg(long, conflicts_with_all = ["case", "sigma", "n", "p", "q", "r", "replicates", "support", "spectrum", "b"])]
    pub config: Option<PathBuf>,
    /// Covariance structure of both blocks.
    #[arg(long, value_enum, default_value = "identity")]
    pub case: CaseArg,
    /// Off-diagonal value for `corr`; Toeplitz base for `toeplitz`
    /// (default 0.3).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    #[arg(long, default_value_t = 200)]
    pub q: usize,
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// One-based support rows, comma separated (default 1,6,11,16,21).
    #[arg(long, value_delimiter = ',')]
    pub support: Option<Vec<usize>>,
    /// Population canonical correlations, comma separated (default 0.9,0.8).
    #[arg(long, value_delimiter = ',')]
    pub spectrum: Option<Vec<f64>>,
    /// Use this b for every replicate instead of cross-validating.
    #[arg(long)]
    pub b: Option<f64>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
}
