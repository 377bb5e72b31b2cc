use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "tacarr", version, about = "Range-based volatility modelling: fit, simulate, forecast, compare")]
pub struct Cli {
    /// Seed for every random choice (multi-starts, simulation).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for replications and multi-starts.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for all output files (created if missing).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// TOML or JSON file with defaults for any option; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract ranges from OHLC data and summarize them.
    Ranges(RangesCmd),
    /// Estimate one or more models.
    Fit(FitCmd),
    /// Monte Carlo parameter-recovery study.
    Simulate(SimulateCmd),
    /// Rolling one-step-ahead forecasts for one model.
    Forecast(ForecastCmd),
    /// Out-of-sample comparison of several models with DM tests.
    Compare(ForecastCmd),
    /// Residual and forecast-error tests on previously written files.
    Diagnose(DiagnoseCmd),
}

#[derive(Debug, Args)]
pub struct RangesCmd {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub diagnostics: DiagnosticsArgs,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub simulation: SimulationArgs,
}

#[derive(Debug, Args)]
pub struct ForecastCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub forecast: ForecastArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseCmd {
    #[command(flatten)]
    pub diagnostics: DiagnosticsArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataArgs {
    /// OHLC CSV file with a header row.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub date_col: Option<String>,
    #[arg(long)]
    pub open_col: Option<String>,
    #[arg(long)]
    pub high_col: Option<String>,
    #[arg(long)]
    pub low_col: Option<String>,
    #[arg(long)]
    pub close_col: Option<String>,
    /// First date to keep (YYYY-MM-DD).
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Last date to keep (YYYY-MM-DD).
    #[arg(long)]
    pub to: Option<NaiveDate>,
    /// Multiplier applied to log price differences (100 gives percent).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Replace zero ranges by half the smallest positive range.
    #[arg(long)]
    pub zero_floor: bool,
    /// Last in-sample date; later observations are out of sample.
    #[arg(long)]
    pub split_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelArgs {
    /// Model name(s), e.g. LNTACARR, ETACARR, LNCARR, ACARR, FACARR, LNTARR,
    /// optionally with orders as in LNTACARR(1,1,1). Repeat the flag or
    /// separate names with commas.
    #[arg(long, short)]
    pub model: Option<Vec<String>>,
    /// ARCH-type order (lags of the range).
    #[arg(long)]
    pub p: Option<usize>,
    /// GARCH-type order (lags of the conditional mean).
    #[arg(long)]
    pub q: Option<usize>,
    /// Regime window (TACARR) or cross-feedback lags (FACARR).
    #[arg(long)]
    pub l: Option<usize>,
    /// TARR threshold delay.
    #[arg(long)]
    pub delay: Option<usize>,
    /// TARR threshold; defaults to the sample mean of the range.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Enforce only positivity, not alpha + beta < 1.
    #[arg(long)]
    pub positivity_only: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationArgs {
    /// Number of optimizer starts.
    #[arg(long)]
    pub n_start: Option<usize>,
    /// Objective-evaluation budget per start.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Skip Hessian standard errors.
    #[arg(long)]
    pub no_std_errors: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationArgs {
    /// True parameters in flat order (see `fit` output for names).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    /// Sample length(s); several values run one study each.
    #[arg(long, value_delimiter = ',')]
    pub t_len: Option<Vec<usize>>,
    /// Replications per study (default 200).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Use 1000 replications.
    #[arg(long)]
    pub full_scale: bool,
    /// Discarded warm-up periods (default 500).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Upward-share law: `uniform` or `beta:A,B`.
    #[arg(long)]
    pub split: Option<String>,
    /// Continue from an existing replication checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Process at most this many new replications, then stop.
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    Squared,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KsModeArg {
    Pooled,
    PerRegime,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastArgs {
    /// Rolling window length; defaults to the in-sample size.
    #[arg(long)]
    pub window: Option<usize>,
    /// Number of out-of-sample forecasts, counted from the end.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Refit every this many steps (default 1).
    #[arg(long)]
    pub refit_every: Option<usize>,
    /// Fit once on the first window only.
    #[arg(long)]
    pub no_refit: bool,
    /// Optimizer starts for warm-started refits (default 1).
    #[arg(long)]
    pub warm_starts: Option<usize>,
    /// Baseline model for DM tests (compare).
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsArgs {
    /// Ljung–Box lags (default 1,5,22).
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub ks_mode: Option<KsModeArg>,
    /// Parametric-bootstrap replications for the KS p-value.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Autocorrelation lags in the correlogram (default 30).
    #[arg(long)]
    pub acf_lags: Option<usize>,
    /// Also render the correlogram as SVG.
    #[arg(long)]
    pub svg: bool,
    /// Fitted-lambda CSV written by `fit` (diagnose).
    #[arg(long)]
    pub lambda: Option<PathBuf>,
    /// Fit report JSON supplying the innovation law (diagnose).
    #[arg(long)]
    pub fit_report: Option<PathBuf>,
    /// Innovation law when no fit report is given: `exp` or `ln:T1[,T2]`.
    #[arg(long)]
    pub law: Option<String>,
    /// Forecast CSVs of two competitors for a DM test (diagnose).
    #[arg(long)]
    pub errors_a: Option<PathBuf>,
    #[arg(long)]
    pub errors_b: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
}
