use alif_core::alif::{QueryStrategy, UpdateStrategy};
use alif_core::dataio::LabelColumn;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::net::SocketAddr;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "alif", version, about = "Active-learning isolation forest")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an isolation forest and save it as JSON.
    Fit(FitArgs),
    /// Score rows with a saved forest, optionally under a session checkpoint.
    Score(ScoreArgs),
    /// Run oracle-driven labeling sessions and write per-iteration metrics.
    Simulate(SimulateArgs),
    /// Run an experiment plan and write the report files.
    Bench(BenchArgs),
    /// Write the square-toroid synthetic dataset as CSV.
    GenToroid(GenToroidArgs),
    /// Start the HTTP labeling service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column (name or 0-based index) to exclude from the features.
    #[arg(long)]
    pub label_col: Option<LabelColumn>,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Subsample size [default: min(256, rows)].
    #[arg(long)]
    pub psi: Option<usize>,
    /// Master seed [default: drawn from entropy and printed].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Model file written by `alif fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Checkpoint file, service state.json, or service session directory
    /// whose supervised depths are applied.
    #[arg(long)]
    pub session: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Label column to exclude from the features.
    #[arg(long)]
    pub label_col: Option<LabelColumn>,
    /// Output CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write rows in descending score order with a rank column.
    #[arg(long)]
    pub ranked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryArg {
    #[value(alias = "anom")]
    MostAnomalous,
    #[value(alias = "unc")]
    MaxUncertainty,
    All,
}

impl QueryArg {
    pub fn expand(self) -> Vec<QueryStrategy> {
        match self {
            QueryArg::MostAnomalous => vec![QueryStrategy::MostAnomalous],
            QueryArg::MaxUncertainty => vec![QueryStrategy::MaxUncertainty],
            QueryArg::All => QueryStrategy::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UpdateArg {
    #[value(alias = "lin")]
    PiecewiseLinear,
    #[value(alias = "log")]
    Logarithmic,
    All,
}

impl UpdateArg {
    pub fn expand(self) -> Vec<UpdateStrategy> {
        match self {
            UpdateArg::PiecewiseLinear => vec![UpdateStrategy::PiecewiseLinear],
            UpdateArg::Logarithmic => vec![UpdateStrategy::Logarithmic],
            UpdateArg::All => UpdateStrategy::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Labeled input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column (name or 0-based index); 1/anomaly marks anomalies.
    #[arg(long, default_value = "label")]
    pub label_col: LabelColumn,
    #[arg(long, default_value_t = 25)]
    pub queries: usize,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, value_enum, default_value_t = QueryArg::MostAnomalous)]
    pub query_strategy: QueryArg,
    #[arg(long, value_enum, default_value_t = UpdateArg::PiecewiseLinear)]
    pub update_strategy: UpdateArg,
    /// Base seed; repetition r uses seed + r [default: drawn from entropy and printed].
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Subsample size [default: min(256, training rows)].
    #[arg(long)]
    pub psi: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Use a plain random split instead of a stratified one.
    #[arg(long)]
    pub no_stratify: bool,
    /// Write 0 instead of wall time in the step_ms column.
    #[arg(long)]
    pub no_timing: bool,
    /// Per-iteration metrics CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Plan file (TOML). Relative dataset paths resolve against its directory.
    #[arg(long)]
    pub plan: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the plan's base_seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenToroidArgs {
    #[arg(long, default_value_t = 1000)]
    pub n_normal: usize,
    #[arg(long, default_value_t = 50)]
    pub n_anomaly: usize,
    /// Half side of the outer square.
    #[arg(long, default_value_t = 2.0)]
    pub outer: f64,
    /// Half side of the inner square.
    #[arg(long, default_value_t = 1.0)]
    pub inner: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address [env: ALIF_BIND, default 127.0.0.1:8080].
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Session store and named datasets [env: ALIF_DATA_DIR].
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Static files served under /ui/ [env: ALIF_STATIC_DIR].
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Access token required on /sessions routes [env: ALIF_AUTH_TOKEN].
    #[arg(long)]
    pub token: Option<String>,
}
