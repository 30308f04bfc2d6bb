mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{NaiveDate, Weekday};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rfnn_core::pipeline::{MethodSettings, Scoring, TuningMode};
use rfnn_core::tuning::CvLoss;
use rfnn_core::ForecastMethod;

#[derive(Parser)]
#[command(name = "rfnn", version, about = "Pattern-based randomized neural network forecasting")]
struct Cli {
    /// More log output (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic hourly series with daily, weekly and yearly cycles.
    Synth(SynthOptions),
    /// Grid-search hyperparameters per weekday with k-fold cross-validation.
    Tune(TuneOptions),
    /// Run the rolling daily forecasting experiment and write a report bundle.
    Forecast(ForecastOptions),
    /// Recompute error metrics from a forecasts.csv file.
    Evaluate(EvaluateOptions),
    /// Pairwise Wilcoxon comparison of ape_records.csv from several runs.
    Compare(CompareOptions),
}

/// Errors split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration (exit 2).
    Usage(String),
    /// IO, data or numerical failure (exit 1).
    Runtime(String),
}

impl From<rfnn_core::Error> for Failure {
    fn from(e: rfnn_core::Error) -> Self {
        match e {
            rfnn_core::Error::Parameter(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_tuning(s: &str) -> Result<TuningMode, String> {
    parse_serde(s)
}

fn parse_scoring(s: &str) -> Result<Scoring, String> {
    parse_serde(s)
}

fn parse_loss(s: &str) -> Result<CvLoss, String> {
    parse_serde(&s.replace('-', "_"))
}

/// Reads a JSON options file; unknown keys are rejected.
fn read_config<T: DeserializeOwned + Serialize + Default>(path: &PathBuf) -> Result<T, Failure> {
    let usage = |e: String| Failure::Usage(format!("{}: {e}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| usage(e.to_string()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage(e.to_string()))?;
    let known = serde_json::to_value(T::default()).map_err(|e| usage(e.to_string()))?;
    if let (Some(given), Some(known)) = (value.as_object(), known.as_object()) {
        if let Some(key) = given.keys().find(|k| !known.contains_key(*k)) {
            return Err(usage(format!("unknown option `{key}`")));
        }
    }
    serde_json::from_value(value).map_err(|e| usage(e.to_string()))
}

/// Fills every unset flag from the config file; flags win.
macro_rules! merge {
    ($flags:expr, $file:expr; $($field:ident),* $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field.take(); } )*
    };
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataOptions {
    /// Hourly CSV with `timestamp,value` columns.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// File with one YYYY-MM-DD date per line to drop (holidays).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(long)]
    pub timestamp_column: Option<String>,
    #[arg(long)]
    pub value_column: Option<String>,
}

impl DataOptions {
    fn merge(&mut self, mut file: DataOptions) {
        merge!(self, file; data, exclude, timestamp_column, value_column);
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    /// Number of days (at least 14).
    #[arg(long, value_parser = clap::value_parser!(u64).range(14..))]
    pub days: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long)]
    pub daily_amplitude: Option<f64>,
    #[arg(long)]
    pub weekly_modulation: Option<f64>,
    #[arg(long)]
    pub yearly_modulation: Option<f64>,
    /// Noise standard deviation as a fraction of `base`.
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// JSON file with any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl SynthOptions {
    fn merge_config(&mut self) -> Result<(), Failure> {
        if let Some(path) = self.config.clone() {
            let mut file: SynthOptions = read_config(&path)?;
            merge!(self, file; days, seed, out, start, base, daily_amplitude, weekly_modulation, yearly_modulation, noise_level);
        }
        Ok(())
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    #[arg(long)]
    pub folds: Option<usize>,
    /// Independently seeded networks per fold.
    #[arg(long)]
    pub trials_per_fold: Option<usize>,
    /// pattern-mae or decoded-mape.
    #[arg(long, value_parser = parse_loss)]
    pub cv_loss: Option<CvLoss>,
    /// Hidden-node counts to search.
    #[arg(long, value_delimiter = ',')]
    pub grid_m: Option<Vec<usize>>,
}

impl CvOptions {
    fn merge(&mut self, mut file: CvOptions) {
        merge!(self, file; folds, trials_per_fold, cv_loss, grid_m);
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneOptions {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: DataOptions,
    /// ram, ralpham, ddm or standard.
    #[arg(long)]
    pub method: Option<ForecastMethod>,
    /// Target weekday; all seven when absent.
    #[arg(long)]
    pub weekday: Option<Weekday>,
    #[arg(long)]
    pub tau: Option<usize>,
    /// Only target days before this date are used; defaults to the day after the data ends.
    #[arg(long)]
    pub cutoff: Option<NaiveDate>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub cv: CvOptions,
    /// Smoothing values to search (u, alpha_max in degrees, or k).
    #[arg(long, value_delimiter = ',')]
    pub grid_smoothing: Option<Vec<f64>>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl TuneOptions {
    fn merge_config(&mut self) -> Result<(), Failure> {
        if let Some(path) = self.config.clone() {
            let mut file: TuneOptions = read_config(&path)?;
            self.input.merge(std::mem::take(&mut file.input));
            self.cv.merge(std::mem::take(&mut file.cv));
            merge!(self, file; method, weekday, tau, cutoff, seed, grid_smoothing, jobs, out_dir);
        }
        Ok(())
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastOptions {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: DataOptions,
    /// Comma-separated: ram, ralpham, ddm, standard, naive.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<ForecastMethod>>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub test_start: Option<NaiveDate>,
    /// Last forecasted day (inclusive).
    #[arg(long)]
    pub test_end: Option<NaiveDate>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// once or per-day.
    #[arg(long, value_parser = parse_tuning)]
    pub tuning: Option<TuningMode>,
    /// pooled or averaged-forecast.
    #[arg(long, value_parser = parse_scoring)]
    pub scoring: Option<Scoring>,
    #[command(flatten)]
    #[serde(flatten)]
    pub cv: CvOptions,
    #[arg(long, value_delimiter = ',')]
    pub grid_u: Option<Vec<f64>>,
    /// Angle bounds in degrees.
    #[arg(long, value_delimiter = ',')]
    pub grid_alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_k: Option<Vec<f64>>,
    /// Significance level of the pairwise Wilcoxon tests.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Exit with 0 even when some days were skipped.
    #[arg(long)]
    pub allow_partial: bool,
    /// Per-method settings with fixed hyperparameters or grids (config file only).
    #[arg(skip)]
    pub settings: Option<Vec<MethodSettings>>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl ForecastOptions {
    fn merge_config(&mut self) -> Result<(), Failure> {
        if let Some(path) = self.config.clone() {
            let mut file: ForecastOptions = read_config(&path)?;
            self.input.merge(std::mem::take(&mut file.input));
            self.cv.merge(std::mem::take(&mut file.cv));
            self.allow_partial |= file.allow_partial;
            merge!(self, file; methods, tau, test_start, test_end, trials, seed, tuning, scoring,
                grid_u, grid_alpha, grid_k, alpha, jobs, out_dir, settings);
        }
        Ok(())
    }
}

#[derive(Args, Clone, Debug)]
pub struct EvaluateOptions {
    /// forecasts.csv, or a report directory containing it.
    #[arg(long)]
    pub forecasts: PathBuf,
    /// pooled or averaged-forecast.
    #[arg(long, value_parser = parse_scoring, default_value = "pooled")]
    pub scoring: Scoring,
    /// Output metrics CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
pub struct CompareOptions {
    /// Two or more report directories or ape_records.csv files.
    #[arg(required = true, num_args = 2..)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output CSV with one row per compared pair.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Synth(o) => commands::synth(o),
        Command::Tune(o) => commands::tune(o),
        Command::Forecast(o) => commands::forecast(o),
        Command::Evaluate(o) => commands::evaluate(o),
        Command::Compare(o) => commands::compare(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
