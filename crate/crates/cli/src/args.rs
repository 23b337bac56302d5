use std::path::PathBuf;

use chrono::{DateTime, NaiveDate, Utc};
use clap::Args;

use reservoir_smpc::controller::Policy;
use reservoir_smpc::eval::LabelledPolicy;

/// RFC 3339 timestamp, or a bare `YYYY-MM-DD` meaning midnight UTC.
pub fn parse_time(raw: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| format!("`{raw}` is neither RFC 3339 nor YYYY-MM-DD"))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..))]
    pub years: u64,
    #[arg(long, value_parser = parse_time, default_value = "1997-01-01")]
    pub start: DateTime<Utc>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the hourly noise [m³/s].
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Multiplier for December–February.
    #[arg(long)]
    pub dry_winter_factor: Option<f64>,
    /// Constant demand written to demand.csv [m³/s].
    #[arg(long, default_value_t = 45.0)]
    pub demand: f64,
    /// Surface area of the generated prismatic reservoir [m²].
    #[arg(long, default_value_t = 2e7)]
    pub area: f64,
}

/// Inflow record and the part of it used for training.
#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// Hourly inflow CSV (`timestamp,inflow_m3s`).
    #[arg(long)]
    pub inflow: PathBuf,
    /// First training hour (default: start of the record).
    #[arg(long, value_parser = parse_time)]
    pub train_start: Option<DateTime<Utc>>,
    /// End of training, exclusive (default: the simulation start, or the end
    /// of the record when fitting).
    #[arg(long, value_parser = parse_time)]
    pub train_end: Option<DateTime<Utc>>,
    /// Fit settings file (`changepoints`, `changepoint_range`,
    /// `seasonalities`, `ridge`).
    #[arg(long)]
    pub fit_config: Option<PathBuf>,
    /// Override the number of trend changepoints.
    #[arg(long)]
    pub changepoints: Option<usize>,
    /// Override the ridge penalty on rate changes.
    #[arg(long)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// How many scenarios to draw: explicit, or from the violation level and
/// confidence of the scenario bound.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario count K; overrides --epsilon/--beta.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub scenarios: Option<u64>,
    /// Violation level ε of the scenario bound.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Confidence parameter β of the scenario bound.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// First forecast hour (default: end of the training window).
    #[arg(long, value_parser = parse_time)]
    pub origin: Option<DateTime<Utc>>,
    #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    #[command(flatten)]
    pub count: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw without changepoints and noise (every column is the nominal
    /// forecast).
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Inputs and controller settings shared by `run` and `montecarlo`. Values
/// given as flags win over the `--controller` file, which wins over the
/// built-in defaults.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Reservoir config (`key = value`).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Controller settings file (`key = value`; keys horizon, scenarios,
    /// epsilon, beta, refit_period, scaling, solver_tol, solver_max_iters,
    /// seed).
    #[arg(long)]
    pub controller: Option<PathBuf>,
    /// Prediction horizon H [h] (default 24).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: Option<u64>,
    #[command(flatten)]
    pub count: ScenarioArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hours between refits of the inflow model (default 24).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub refit_period: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub policy: Policy,
    /// First simulated hour; training ends here (default: --train-end).
    #[arg(long, value_parser = parse_time)]
    pub sim_start: Option<DateTime<Utc>>,
    /// Closed-loop steps T.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    /// `policy` or `label=policy`; repeatable (default: all four policies).
    #[arg(long = "policy")]
    pub policies: Vec<LabelledPolicy>,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(2..))]
    pub replicates: u64,
    /// Closed-loop steps per replicate.
    #[arg(long, default_value_t = 720, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    /// Weight c_d of dry hours in the nonlinear cost.
    #[arg(long, default_value_t = reservoir_smpc::eval::DEFAULT_DRY_WEIGHT)]
    pub dry_weight: f64,
    /// Also write one cumulative-cost CSV per replicate.
    #[arg(long)]
    pub curves: bool,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by `run` or `montecarlo`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
