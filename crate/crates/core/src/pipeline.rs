//! Rolling daily forecasting experiment.
//!
//! For every test day a training set is assembled from history strictly
//! before that day, the configured networks are trained `trials` times with
//! independent seeds, and the forecasts are decoded and scored. Every per-task
//! seed is derived from `(master seed, day, trial)`, and results are reduced in
//! `(day, trial)` order, so reports do not depend on the thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{build_training_set, decode, encode_x, CodingVars, TrainingSet};
use crate::error::{param, Error, Result};
use crate::evaluation::{
    percentile_sorted, summarize, wilcoxon_signed_rank, write_metrics_csv, ErrorRecord, MetricsSummary, WilcoxonResult,
};
use crate::randnn::{train, HyperParams, Method};
use crate::seed::derive_seed;
use crate::timeseries::SeasonalSequence;
use crate::tuning::{default_grid, grid_search, CvSettings, Grid, TuneResult};

const TUNE_TAG: u64 = 0x7E7E;

/// A forecaster taking part in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ForecastMethod {
    Randomized(Method),
    /// Same weekday one week earlier.
    SeasonalNaive,
}

impl fmt::Display for ForecastMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForecastMethod::Randomized(m) => write!(f, "{m}"),
            ForecastMethod::SeasonalNaive => f.write_str("naive"),
        }
    }
}

impl FromStr for ForecastMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" | "seasonal-naive" => Ok(ForecastMethod::SeasonalNaive),
            other => other.parse().map(ForecastMethod::Randomized),
        }
    }
}

impl From<ForecastMethod> for String {
    fn from(m: ForecastMethod) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for ForecastMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningMode {
    /// Tune once per (method, weekday) on data before the first test day.
    #[default]
    Once,
    /// Re-tune for every forecasted day.
    PerDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// Every (day, hour, trial) forecast contributes an error record.
    #[default]
    Pooled,
    /// Trials are averaged into one forecast before scoring.
    AveragedForecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub method: ForecastMethod,
    /// Fixed hyperparameters; when absent the method is tuned on `grid`.
    #[serde(default)]
    pub hyper: Option<HyperParams>,
    /// Search grid; the default grid of the method when absent.
    #[serde(default)]
    pub grid: Option<Grid>,
}

impl MethodSettings {
    pub fn tuned(method: ForecastMethod) -> Self {
        Self { method, hyper: None, grid: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<MethodSettings>,
    pub tau: usize,
    pub test_start: NaiveDate,
    /// Inclusive.
    pub test_end: NaiveDate,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub tuning: TuningMode,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default)]
    pub scoring: Scoring,
    pub alpha: f64,
    /// Worker threads; 0 uses the global pool.
    #[serde(default)]
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn new(methods: Vec<MethodSettings>, test_start: NaiveDate, test_end: NaiveDate) -> Self {
        Self {
            methods,
            tau: 1,
            test_start,
            test_end,
            trials: 100,
            seed: 0,
            tuning: TuningMode::Once,
            cv: CvSettings::default(),
            scoring: Scoring::Pooled,
            alpha: 0.05,
            jobs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return param("no methods configured");
        }
        if self.test_end < self.test_start {
            return param("test period is empty");
        }
        if self.trials == 0 {
            return param("trials must be at least 1");
        }
        if self.tau == 0 {
            return param("forecast horizon must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return param("alpha must lie in (0, 1)");
        }
        for s in &self.methods {
            if let (ForecastMethod::Randomized(m), Some(hp)) = (s.method, &s.hyper) {
                hp.validate(m)?;
            }
        }
        Ok(())
    }

    pub fn test_days(&self) -> Vec<NaiveDate> {
        self.test_start.iter_days().take_while(|d| *d <= self.test_end).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum SkipReason {
    /// The forecasted day is excluded or absent, so it cannot be scored.
    MissingTarget,
    MissingInputPattern,
    DegenerateInput,
    EmptyTrainingSet,
    MissingNaiveReference,
    TuningFailed(String),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::MissingTarget => f.write_str("missing or excluded target day"),
            SkipReason::MissingInputPattern => f.write_str("missing input pattern"),
            SkipReason::DegenerateInput => f.write_str("constant input sequence"),
            SkipReason::EmptyTrainingSet => f.write_str("empty training set"),
            SkipReason::MissingNaiveReference => f.write_str("missing naive reference day"),
            SkipReason::TuningFailed(msg) => write!(f, "tuning failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DayOutcome {
    /// One decoded forecast per trial.
    Forecast(Vec<Vec<f64>>),
    Skipped(SkipReason),
}

fn day_tag(day: NaiveDate) -> u64 {
    day.num_days_from_ce() as u64
}

fn find(history: &[SeasonalSequence], date: NaiveDate) -> Option<&SeasonalSequence> {
    history.iter().find(|s| s.date == date)
}

/// Inputs for forecasting one day, built only from data dated before it.
struct DayContext {
    history: Vec<SeasonalSequence>,
    training: std::result::Result<TrainingSet, SkipReason>,
    query: std::result::Result<(Vec<f64>, CodingVars), SkipReason>,
}

impl DayContext {
    fn new(sequences: &[SeasonalSequence], day: NaiveDate, tau: usize) -> Result<Self> {
        let history: Vec<SeasonalSequence> = sequences.iter().filter(|s| s.date < day).cloned().collect();
        let training = match build_training_set(&history, day.weekday(), tau, day) {
            Ok(set) => Ok(set),
            Err(Error::EmptyTrainingSet { .. }) => Err(SkipReason::EmptyTrainingSet),
            Err(e) => return Err(e),
        };
        let query = match find(&history, day - Duration::days(tau as i64)) {
            None => Err(SkipReason::MissingInputPattern),
            Some(s) => match encode_x(&s.values) {
                Ok(q) => Ok(q),
                Err(Error::DegenerateDispersion { .. }) => Err(SkipReason::DegenerateInput),
                Err(e) => return Err(e),
            },
        };
        Ok(Self { history, training, query })
    }

    fn forecast(
        &self,
        day: NaiveDate,
        method: Method,
        hyper: &HyperParams,
        trials: usize,
        seed: u64,
    ) -> Result<DayOutcome> {
        let (x, coding) = match &self.query {
            Ok(q) => q,
            Err(r) => return Ok(DayOutcome::Skipped(r.clone())),
        };
        let phi = match &self.training {
            Ok(phi) => phi,
            Err(r) => return Ok(DayOutcome::Skipped(r.clone())),
        };
        let (xs, ys) = (phi.inputs(), phi.targets());
        let forecasts = (0..trials)
            .map(|t| {
                let hp = hyper.with_seed(derive_seed(seed, &[day_tag(day), t as u64]));
                let model = train(method, &hp, &xs, &ys)?;
                Ok(decode(&model.predict(x)?, *coding))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DayOutcome::Forecast(forecasts))
    }
}

/// Forecasts `day` with `trials` independently seeded networks. Only
/// sequences dated before `day` are read.
pub fn run_day(
    sequences: &[SeasonalSequence],
    day: NaiveDate,
    method: Method,
    hyper: &HyperParams,
    trials: usize,
    tau: usize,
    seed: u64,
) -> Result<DayOutcome> {
    hyper.validate(method)?;
    DayContext::new(sequences, day, tau)?.forecast(day, method, hyper, trials, seed)
}

/// The sequence of the same weekday one week before `day`.
pub fn seasonal_naive(sequences: &[SeasonalSequence], day: NaiveDate) -> DayOutcome {
    match find(sequences, day - Duration::days(7)) {
        Some(s) => DayOutcome::Forecast(vec![s.values.clone()]),
        None => DayOutcome::Skipped(SkipReason::MissingNaiveReference),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayForecast {
    pub date: NaiveDate,
    pub actual: Vec<f64>,
    /// One decoded forecast per trial.
    pub trials: Vec<Vec<f64>>,
}

impl DayForecast {
    /// 5th/50th/95th percentiles over trials, per hour.
    pub fn bands(&self) -> Vec<Band> {
        (0..self.actual.len())
            .map(|h| {
                let mut v: Vec<f64> = self.trials.iter().map(|t| t[h]).collect();
                v.sort_by(f64::total_cmp);
                Band {
                    p05: percentile_sorted(&v, 5.0),
                    p50: percentile_sorted(&v, 50.0),
                    p95: percentile_sorted(&v, 95.0),
                }
            })
            .collect()
    }

    pub fn mean_forecast(&self) -> Vec<f64> {
        let k = self.trials.len() as f64;
        (0..self.actual.len()).map(|h| self.trials.iter().map(|t| t[h]).sum::<f64>() / k).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedRecord {
    /// Weekday (tuning once) or date (tuning per day).
    pub scope: String,
    pub hyper: HyperParams,
    pub cv_mean: f64,
    pub cv_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: ForecastMethod,
    pub summary: MetricsSummary,
    pub days: Vec<DayForecast>,
    pub tuned: Vec<TunedRecord>,
}

impl MethodReport {
    pub fn forecast_count(&self) -> usize {
        self.days.iter().map(|d| d.trials.len()).sum()
    }

    /// Error records with trial index, in (day, trial, hour) order.
    pub fn records(&self, scoring: Scoring) -> Result<Vec<(usize, ErrorRecord)>> {
        let mut out = Vec::new();
        for d in &self.days {
            match scoring {
                Scoring::Pooled => {
                    for (t, f) in d.trials.iter().enumerate() {
                        for (h, (&a, &v)) in d.actual.iter().zip(f).enumerate() {
                            out.push((t, ErrorRecord::new(d.date, h, a, v)?));
                        }
                    }
                }
                Scoring::AveragedForecast => {
                    for (h, (&a, v)) in d.actual.iter().zip(d.mean_forecast()).enumerate() {
                        out.push((0, ErrorRecord::new(d.date, h, a, v)?));
                    }
                }
            }
        }
        Ok(out)
    }

    /// APE per (day, hour), averaged over trials; the Wilcoxon pairing unit.
    pub fn mean_ape(&self) -> Vec<f64> {
        self.days
            .iter()
            .flat_map(|d| {
                (0..d.actual.len()).map(move |h| {
                    let a = d.actual[h];
                    d.trials.iter().map(|t| (100.0 * (a - t[h]) / a).abs()).sum::<f64>() / d.trials.len() as f64
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: ForecastMethod,
    pub b: ForecastMethod,
    pub result: Option<WilcoxonResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDay {
    pub date: NaiveDate,
    pub method: Option<ForecastMethod>,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub methods: Vec<MethodReport>,
    pub wilcoxon: Vec<PairwiseComparison>,
    pub skipped: Vec<SkippedDay>,
}

impl ExperimentReport {
    pub fn method(&self, m: ForecastMethod) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn forecast_days(&self) -> usize {
        self.methods.first().map_or(0, |m| m.days.len())
    }
}

type TuneTable = BTreeMap<(usize, u32), std::result::Result<TuneResult, String>>;

fn tune_once(config: &ExperimentConfig, sequences: &[SeasonalSequence], days: &[NaiveDate]) -> Result<TuneTable> {
    let history: Vec<SeasonalSequence> = sequences.iter().filter(|s| s.date < config.test_start).cloned().collect();
    let mut weekdays: Vec<Weekday> = days.iter().map(|d| d.weekday()).collect();
    weekdays.sort_by_key(|w| w.num_days_from_monday());
    weekdays.dedup();
    let jobs: Vec<(usize, Method, Weekday)> = config
        .methods
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match (s.method, &s.hyper) {
            (ForecastMethod::Randomized(m), None) => Some((i, m)),
            _ => None,
        })
        .flat_map(|(i, m)| weekdays.iter().map(move |&w| (i, m, w)))
        .collect();
    let results: Vec<((usize, u32), std::result::Result<TuneResult, String>)> = jobs
        .par_iter()
        .map(|&(i, m, w)| {
            let grid = match &config.methods[i].grid {
                Some(g) => g.clone(),
                None => default_grid(m)?,
            };
            let seed = derive_seed(config.seed, &[TUNE_TAG, w.num_days_from_monday() as u64]);
            let outcome = build_training_set(&history, w, config.tau, config.test_start)
                .and_then(|phi| grid_search(&phi, m, &grid, &config.cv, seed))
                .map_err(|e| e.to_string());
            Ok(((i, w.num_days_from_monday()), outcome))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().collect())
}

/// Actuals, per-method trial forecasts and per-method tuning choices.
type DayForecasts = (Vec<f64>, Vec<Vec<Vec<f64>>>, Vec<Option<TunedRecord>>);

struct DayResult {
    date: NaiveDate,
    outcome: std::result::Result<DayForecasts, SkippedDay>,
}

fn process_day(
    config: &ExperimentConfig,
    sequences: &[SeasonalSequence],
    tuned: &TuneTable,
    day: NaiveDate,
) -> Result<DayResult> {
    let skip = |method: Option<ForecastMethod>, reason| {
        Ok(DayResult { date: day, outcome: Err(SkippedDay { date: day, method, reason }) })
    };
    let Some(actual) = find(sequences, day).map(|s| s.values.clone()) else {
        return skip(None, SkipReason::MissingTarget);
    };
    let ctx = DayContext::new(sequences, day, config.tau)?;
    let mut per_method = Vec::with_capacity(config.methods.len());
    let mut tuned_records = Vec::with_capacity(config.methods.len());
    for (i, settings) in config.methods.iter().enumerate() {
        let (outcome, record) = match settings.method {
            ForecastMethod::SeasonalNaive => {
                let outcome = match seasonal_naive(&ctx.history, day) {
                    DayOutcome::Forecast(f) => DayOutcome::Forecast(vec![f[0].clone(); config.trials]),
                    skipped => skipped,
                };
                (outcome, None)
            }
            ForecastMethod::Randomized(m) => {
                let (hyper, record) = match (&settings.hyper, config.tuning) {
                    (Some(hp), _) => (*hp, None),
                    (None, TuningMode::Once) => match &tuned[&(i, day.weekday().num_days_from_monday())] {
                        Ok(r) => (r.best, None),
                        Err(msg) => return skip(Some(settings.method), SkipReason::TuningFailed(msg.clone())),
                    },
                    (None, TuningMode::PerDay) => {
                        let phi = match &ctx.training {
                            Ok(phi) => phi,
                            Err(r) => return skip(Some(settings.method), r.clone()),
                        };
                        let grid = match &settings.grid {
                            Some(g) => g.clone(),
                            None => default_grid(m)?,
                        };
                        let seed = derive_seed(config.seed, &[TUNE_TAG, day_tag(day)]);
                        match grid_search(phi, m, &grid, &config.cv, seed) {
                            Ok(r) => {
                                let row = &r.table[crate::tuning::best_index(&r.table).unwrap()];
                                let rec = TunedRecord {
                                    scope: day.to_string(),
                                    hyper: r.best,
                                    cv_mean: row.mean,
                                    cv_std: row.std,
                                };
                                (r.best, Some(rec))
                            }
                            Err(e) => return skip(Some(settings.method), SkipReason::TuningFailed(e.to_string())),
                        }
                    }
                };
                (ctx.forecast(day, m, &hyper, config.trials, config.seed)?, record)
            }
        };
        match outcome {
            DayOutcome::Forecast(f) => per_method.push(f),
            DayOutcome::Skipped(reason) => return skip(Some(settings.method), reason),
        }
        tuned_records.push(record);
    }
    Ok(DayResult { date: day, outcome: Ok((actual, per_method, tuned_records)) })
}

fn run_inner(config: &ExperimentConfig, sequences: &[SeasonalSequence]) -> Result<ExperimentReport> {
    let days = config.test_days();
    let tuned = match config.tuning {
        TuningMode::Once => tune_once(config, sequences, &days)?,
        TuningMode::PerDay => TuneTable::new(),
    };
    let results: Vec<DayResult> =
        days.par_iter().map(|&day| process_day(config, sequences, &tuned, day)).collect::<Result<_>>()?;

    let mut methods: Vec<(Vec<DayForecast>, Vec<TunedRecord>)> = vec![(Vec::new(), Vec::new()); config.methods.len()];
    let mut skipped = Vec::new();
    for r in results {
        match r.outcome {
            Ok((actual, forecasts, records)) => {
                for (i, (trials, rec)) in forecasts.into_iter().zip(records).enumerate() {
                    methods[i].0.push(DayForecast { date: r.date, actual: actual.clone(), trials });
                    methods[i].1.extend(rec);
                }
            }
            Err(s) => {
                log::info!("skipping {}: {}", r.date, s.reason);
                skipped.push(s);
            }
        }
    }
    if methods[0].0.is_empty() {
        return Err(Error::Experiment(format!("all {} test day(s) were skipped", days.len())));
    }

    let mut reports = Vec::with_capacity(methods.len());
    for ((days, mut tuned_records), settings) in methods.into_iter().zip(&config.methods) {
        if let (ForecastMethod::Randomized(_), TuningMode::Once, None) =
            (settings.method, config.tuning, &settings.hyper)
        {
            let i = reports.len();
            for ((j, w), r) in &tuned {
                if let (true, Ok(r)) = (*j == i, r) {
                    let row = &r.table[crate::tuning::best_index(&r.table).unwrap()];
                    tuned_records.push(TunedRecord {
                        scope: Weekday::try_from(*w as u8).map_or_else(|_| w.to_string(), |w| w.to_string()),
                        hyper: r.best,
                        cv_mean: row.mean,
                        cv_std: row.std,
                    });
                }
            }
        }
        let mut report = MethodReport {
            method: settings.method,
            summary: MetricsSummary {
                n: 0,
                mape: 0.0,
                median_ape: 0.0,
                rmse: 0.0,
                mpe: 0.0,
                std_pe: 0.0,
                std_pe_defined: false,
            },
            days,
            tuned: tuned_records,
        };
        let records: Vec<ErrorRecord> = report.records(config.scoring)?.into_iter().map(|r| r.1).collect();
        report.summary = summarize(&records)?;
        reports.push(report);
    }

    let apes: Vec<Vec<f64>> = reports.iter().map(MethodReport::mean_ape).collect();
    let mut wilcoxon = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            let (result, error) = match wilcoxon_signed_rank(&apes[i], &apes[j], config.alpha) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            wilcoxon.push(PairwiseComparison { a: reports[i].method, b: reports[j].method, result, error });
        }
    }
    Ok(ExperimentReport { config: config.clone(), methods: reports, wilcoxon, skipped })
}

/// Runs the rolling experiment over the configured test period. Days that
/// any method cannot forecast are skipped for all methods.
pub fn run_experiment(config: &ExperimentConfig, sequences: &[SeasonalSequence]) -> Result<ExperimentReport> {
    config.validate()?;
    if config.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Experiment(e.to_string()))?;
        pool.install(|| run_inner(config, sequences))
    } else {
        run_inner(config, sequences)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// `method,date,trial,hour,forecast,actual`
pub fn write_forecasts_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "date", "trial", "hour", "forecast", "actual"])?;
    for m in &report.methods {
        let name = m.method.to_string();
        for d in &m.days {
            let date = d.date.to_string();
            for (t, f) in d.trials.iter().enumerate() {
                for (h, (v, a)) in f.iter().zip(&d.actual).enumerate() {
                    w.write_record([&name, &date, &t.to_string(), &h.to_string(), &v.to_string(), &a.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `method,date,hour,trial,actual,forecast,pe,ape`
pub fn write_ape_records_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "date", "hour", "trial", "actual", "forecast", "pe", "ape"])?;
    for m in &report.methods {
        let name = m.method.to_string();
        for (t, r) in m.records(Scoring::Pooled)? {
            w.write_record([
                name.clone(),
                r.date.to_string(),
                r.hour.to_string(),
                t.to_string(),
                r.actual.to_string(),
                r.forecast.to_string(),
                r.pe.to_string(),
                r.ape.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `method,scope,m,smoothing,cv_mean,cv_std`
pub fn write_tuning_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "scope", "m", "smoothing", "cv_mean", "cv_std"])?;
    for m in &report.methods {
        for r in &m.tuned {
            w.write_record([
                m.method.to_string(),
                r.scope.clone(),
                r.hyper.m.to_string(),
                r.hyper.smoothing.value().to_string(),
                r.cv_mean.to_string(),
                r.cv_std.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `method,date,hour,p05,p50,p95`
pub fn write_bands_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "date", "hour", "p05", "p50", "p95"])?;
    for m in &report.methods {
        for d in &m.days {
            for (h, b) in d.bands().iter().enumerate() {
                w.write_record([
                    m.method.to_string(),
                    d.date.to_string(),
                    h.to_string(),
                    b.p05.to_string(),
                    b.p50.to_string(),
                    b.p95.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    seed: u64,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    invocation: Option<&'a serde_json::Value>,
    summaries: BTreeMap<String, &'a MetricsSummary>,
    forecast_days: usize,
    wilcoxon_test: &'static str,
    wilcoxon: &'a [PairwiseComparison],
    skipped: &'a [SkippedDay],
}

/// Writes `report.json`, `forecasts.csv`, `tuning.csv`, `ape_records.csv`,
/// `metrics.csv` and `bands.csv` into `dir`. `invocation` is echoed verbatim
/// into `report.json` for replay.
pub fn write_bundle(report: &ExperimentReport, dir: &Path, invocation: Option<&serde_json::Value>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let doc = ReportDocument {
        seed: report.config.seed,
        config: &report.config,
        invocation,
        summaries: report.methods.iter().map(|m| (m.method.to_string(), &m.summary)).collect(),
        forecast_days: report.forecast_days(),
        wilcoxon_test:
            "two-sided signed-rank on per-(day, hour) APE averaged over trials; decision favours the smaller APE sum",
        wilcoxon: &report.wilcoxon,
        skipped: &report.skipped,
    };
    let mut f = create(dir, "report.json")?;
    serde_json::to_writer_pretty(&mut f, &doc)?;
    f.flush()?;
    write_forecasts_csv(report, create(dir, "forecasts.csv")?)?;
    write_tuning_csv(report, create(dir, "tuning.csv")?)?;
    write_ape_records_csv(report, create(dir, "ape_records.csv")?)?;
    write_bands_csv(report, create(dir, "bands.csv")?)?;
    let summaries: Vec<(String, MetricsSummary)> =
        report.methods.iter().map(|m| (m.method.to_string(), m.summary)).collect();
    write_metrics_csv(&summaries, create(dir, "metrics.csv")?)?;
    Ok(())
}
