use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, Weekday};
use log::info;

use rfnn_core::encoding::{build_training_set, write_patterns_csv};
use rfnn_core::evaluation::{summarize, wilcoxon_signed_rank, write_metrics_csv, ErrorRecord, WilcoxonDecision};
use rfnn_core::pipeline::{run_experiment, write_bundle, ExperimentConfig, MethodSettings, Scoring, TuningMode};
use rfnn_core::timeseries::{load_csv, read_exclusion_list, synth_generate, CsvSchema, SynthSpec};
use rfnn_core::tuning::{default_grid, grid_search, CvSettings, Grid};
use rfnn_core::{ForecastMethod, Method, MetricsSummary, SeasonalSequence};

use crate::{
    CompareOptions, CvOptions, DataOptions, EvaluateOptions, Failure, ForecastOptions, SynthOptions, TuneOptions,
};

/// Values keyed by (date, hour).
type Cells<T> = BTreeMap<(NaiveDate, usize), T>;

const WEEKDAYS: [Weekday; 7] =
    [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri, Weekday::Sat, Weekday::Sun];

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn output_dir(dir: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = dir.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Loads, filters and splits the series into daily sequences.
fn load_sequences(input: &DataOptions) -> Result<Vec<SeasonalSequence>, Failure> {
    let path = input.data.as_ref().ok_or_else(|| usage("--data is required"))?;
    let defaults = CsvSchema::default();
    let schema = CsvSchema {
        timestamp_column: input.timestamp_column.clone().unwrap_or(defaults.timestamp_column),
        value_column: input.value_column.clone().unwrap_or(defaults.value_column),
    };
    let mut series =
        load_csv(open(path)?, &schema).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    if let Some(list) = &input.exclude {
        let dates = read_exclusion_list(open(list)?)?;
        let (filtered, unknown) = series.exclude_days(&dates);
        if unknown > 0 {
            log::warn!("{unknown} excluded date(s) are not in the data");
        }
        series = filtered;
    }
    let split = series.split_seasonal(24)?;
    if !split.incomplete_days.is_empty() {
        log::warn!("dropped {} incomplete day(s)", split.incomplete_days.len());
    }
    info!("{} complete days loaded", split.sequences.len());
    Ok(split.sequences)
}

fn cv_settings(cv: &CvOptions) -> CvSettings {
    let d = CvSettings::default();
    CvSettings {
        folds: cv.folds.unwrap_or(d.folds),
        trials_per_fold: cv.trials_per_fold.unwrap_or(d.trials_per_fold),
        loss: cv.cv_loss.unwrap_or(d.loss),
    }
}

/// Default grid of `method`, with either axis optionally replaced.
fn grid_for(method: Method, m: Option<&Vec<usize>>, smoothing: Option<&Vec<f64>>) -> Result<Grid, Failure> {
    let d = default_grid(method)?;
    Ok(Grid::new(m.cloned().unwrap_or(d.m_values), smoothing.cloned().unwrap_or(d.smoothing_values))?)
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match jobs {
        Some(n) if n > 0 => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Failure::Runtime(e.to_string()))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

pub fn synth(mut o: SynthOptions) -> Result<(), Failure> {
    o.merge_config()?;
    let d = SynthSpec::default();
    let spec = SynthSpec {
        base: o.base.unwrap_or(d.base),
        daily_amplitude: o.daily_amplitude.unwrap_or(d.daily_amplitude),
        weekly_modulation: o.weekly_modulation.unwrap_or(d.weekly_modulation),
        yearly_modulation: o.yearly_modulation.unwrap_or(d.yearly_modulation),
        noise_level: o.noise_level.unwrap_or(d.noise_level),
        start_date: o.start.unwrap_or(d.start_date),
        days: o.days.map_or(d.days, |v| v as usize),
    };
    let series = synth_generate(&spec, o.seed.unwrap_or(0))?;
    match &o.out {
        Some(path) => {
            let mut w = create(path)?;
            series.write_csv(&mut w)?;
            w.flush()?;
            info!("wrote {} rows to {}", series.len(), path.display());
        }
        None => series.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

pub fn tune(mut o: TuneOptions) -> Result<(), Failure> {
    o.merge_config()?;
    let method = match o.method {
        Some(ForecastMethod::Randomized(m)) => m,
        Some(ForecastMethod::SeasonalNaive) => return Err(usage("the naive baseline has no hyperparameters")),
        None => return Err(usage("--method is required")),
    };
    let sequences = load_sequences(&o.input)?;
    let cutoff = match o.cutoff {
        Some(c) => c,
        None => sequences.last().map(|s| s.date + Duration::days(1)).ok_or_else(|| usage("no complete days"))?,
    };
    let tau = o.tau.unwrap_or(1);
    let seed = o.seed.unwrap_or(0);
    let grid = grid_for(method, o.cv.grid_m.as_ref(), o.grid_smoothing.as_ref())?;
    let settings = cv_settings(&o.cv);
    let weekdays: Vec<Weekday> = o.weekday.map_or(WEEKDAYS.to_vec(), |w| vec![w]);
    let dir = output_dir(o.out_dir.clone())?;

    let mut table = csv::Writer::from_writer(create(&dir.join("tuning.csv"))?);
    table.write_record(["weekday", "method", "m", "smoothing", "mean", "std", "feasible"])?;
    let mut patterns = Vec::new();
    for weekday in weekdays {
        let phi = build_training_set(&sequences, weekday, tau, cutoff)?;
        let result = with_jobs(o.jobs, || grid_search(&phi, method, &grid, &settings, seed))??;
        for row in &result.table {
            table.write_record([
                weekday.to_string(),
                method.to_string(),
                row.m.to_string(),
                row.smoothing.to_string(),
                row.mean.to_string(),
                row.std.to_string(),
                row.feasible.to_string(),
            ])?;
        }
        println!(
            "{weekday}: {method} m={} {}={} (N={}, {} gridpoints)",
            result.best.m,
            smoothing_name(method),
            result.best.smoothing.value(),
            phi.len(),
            result.table.len()
        );
        patterns.extend(phi.pairs);
    }
    table.flush()?;
    write_patterns_csv(&patterns, create(&dir.join("patterns.csv"))?)?;
    Ok(())
}

fn smoothing_name(method: Method) -> &'static str {
    match method {
        Method::Standard | Method::RaM => "u",
        Method::RAlphaM => "alpha_max",
        Method::Ddm => "k",
    }
}

fn experiment_config(o: &ForecastOptions) -> Result<ExperimentConfig, Failure> {
    let settings = match &o.settings {
        Some(s) => s.clone(),
        None => {
            let methods = o.methods.clone().unwrap_or_else(|| {
                vec![
                    ForecastMethod::Randomized(Method::RaM),
                    ForecastMethod::Randomized(Method::RAlphaM),
                    ForecastMethod::Randomized(Method::Ddm),
                    ForecastMethod::SeasonalNaive,
                ]
            });
            methods
                .into_iter()
                .map(|method| {
                    let grid = match method {
                        ForecastMethod::SeasonalNaive => None,
                        ForecastMethod::Randomized(m) => {
                            let smoothing = match m {
                                Method::Standard | Method::RaM => o.grid_u.as_ref(),
                                Method::RAlphaM => o.grid_alpha.as_ref(),
                                Method::Ddm => o.grid_k.as_ref(),
                            };
                            Some(grid_for(m, o.cv.grid_m.as_ref(), smoothing)?)
                        }
                    };
                    Ok(MethodSettings { method, hyper: None, grid })
                })
                .collect::<Result<Vec<_>, Failure>>()?
        }
    };
    let start = o.test_start.ok_or_else(|| usage("--test-start is required"))?;
    let end = o.test_end.ok_or_else(|| usage("--test-end is required"))?;
    let mut config = ExperimentConfig::new(settings, start, end);
    config.tau = o.tau.unwrap_or(config.tau);
    config.trials = o.trials.unwrap_or(config.trials);
    config.seed = o.seed.unwrap_or(config.seed);
    config.tuning = o.tuning.unwrap_or(TuningMode::Once);
    config.scoring = o.scoring.unwrap_or(Scoring::Pooled);
    config.cv = cv_settings(&o.cv);
    config.alpha = o.alpha.unwrap_or(config.alpha);
    config.jobs = o.jobs.unwrap_or(0);
    config.validate()?;
    Ok(config)
}

pub fn forecast(mut o: ForecastOptions) -> Result<(), Failure> {
    o.merge_config()?;
    let config = experiment_config(&o)?;
    let sequences = load_sequences(&o.input)?;
    let report = run_experiment(&config, &sequences)?;
    let dir = output_dir(o.out_dir.clone())?;
    let invocation = serde_json::to_value(&o).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_bundle(&report, &dir, Some(&invocation))?;

    print_summaries(report.methods.iter().map(|m| (m.method.to_string(), m.summary)));
    for c in &report.wilcoxon {
        match (&c.result, &c.error) {
            (Some(r), _) => println!("{} vs {}: p={:.4} {}", c.a, c.b, r.p_value, verdict(r.decision, &c.a, &c.b)),
            (None, Some(e)) => println!("{} vs {}: {e}", c.a, c.b),
            _ => {}
        }
    }
    println!("report written to {}", dir.display());
    if !report.skipped.is_empty() {
        let mut w = csv::Writer::from_writer(create(&dir.join("skipped.csv"))?);
        w.write_record(["date", "method", "reason"])?;
        for s in &report.skipped {
            let method = s.method.map(|m| m.to_string()).unwrap_or_default();
            w.write_record([s.date.to_string(), method, s.reason.to_string()])?;
        }
        w.flush()?;
        let msg = format!(
            "{} of {} test day(s) skipped; see {}",
            report.skipped.len(),
            config.test_days().len(),
            dir.join("skipped.csv").display()
        );
        if !o.allow_partial {
            return Err(Failure::Runtime(msg));
        }
        log::warn!("{msg}");
    }
    Ok(())
}

fn verdict(decision: WilcoxonDecision, a: &dyn std::fmt::Display, b: &dyn std::fmt::Display) -> String {
    match decision {
        WilcoxonDecision::ABetter => format!("{a} better"),
        WilcoxonDecision::BBetter => format!("{b} better"),
        WilcoxonDecision::Indistinguishable => "indistinguishable".into(),
    }
}

fn print_summaries(rows: impl Iterator<Item = (String, MetricsSummary)>) {
    println!("{:<10} {:>8} {:>10} {:>12} {:>8} {:>8}", "method", "MAPE", "MedianAPE", "RMSE", "MPE", "StdPE");
    for (name, s) in rows {
        println!(
            "{:<10} {:>8.3} {:>10.3} {:>12.3} {:>8.3} {:>8.3}",
            name, s.mape, s.median_ape, s.rmse, s.mpe, s.std_pe
        );
    }
}

fn in_dir_or_file(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

#[derive(serde::Deserialize)]
struct ForecastRow {
    method: String,
    date: NaiveDate,
    hour: usize,
    forecast: f64,
    actual: f64,
}

pub fn evaluate(o: EvaluateOptions) -> Result<(), Failure> {
    let path = in_dir_or_file(&o.forecasts, "forecasts.csv");
    let mut reader = csv::Reader::from_reader(open(&path)?);
    // method -> (date, hour) -> (actual, forecasts over trials)
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Cells<(f64, Vec<f64>)>> = BTreeMap::new();
    for row in reader.deserialize() {
        let r: ForecastRow = row?;
        if !rows.contains_key(&r.method) {
            order.push(r.method.clone());
        }
        let cell = rows.entry(r.method).or_default().entry((r.date, r.hour)).or_insert((r.actual, Vec::new()));
        cell.1.push(r.forecast);
    }
    if order.is_empty() {
        return Err(Failure::Runtime(format!("{}: no forecasts", path.display())));
    }
    let mut summaries = Vec::new();
    for method in order {
        let mut records = Vec::new();
        for (&(date, hour), (actual, forecasts)) in &rows[&method] {
            match o.scoring {
                Scoring::Pooled => {
                    for &f in forecasts {
                        records.push(ErrorRecord::new(date, hour, *actual, f)?);
                    }
                }
                Scoring::AveragedForecast => {
                    let mean = forecasts.iter().sum::<f64>() / forecasts.len() as f64;
                    records.push(ErrorRecord::new(date, hour, *actual, mean)?);
                }
            }
        }
        summaries.push((method, summarize(&records)?));
    }
    match &o.out {
        Some(out) => {
            write_metrics_csv(&summaries, create(out)?)?;
            print_summaries(summaries.into_iter());
        }
        None => write_metrics_csv(&summaries, io::stdout().lock())?,
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct ApeRow {
    method: String,
    date: NaiveDate,
    hour: usize,
    ape: f64,
}

/// Per-(date, hour) APE averaged over trials, for every method in a file.
fn read_ape(path: &Path) -> Result<Vec<(String, Cells<f64>)>, Failure> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut order: Vec<String> = Vec::new();
    let mut sums: BTreeMap<String, Cells<(f64, usize)>> = BTreeMap::new();
    for row in reader.deserialize() {
        let r: ApeRow = row.map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        if !sums.contains_key(&r.method) {
            order.push(r.method.clone());
        }
        let cell = sums.entry(r.method).or_default().entry((r.date, r.hour)).or_insert((0.0, 0));
        cell.0 += r.ape;
        cell.1 += 1;
    }
    if order.is_empty() {
        return Err(Failure::Runtime(format!("{}: no records", path.display())));
    }
    Ok(order
        .into_iter()
        .map(|m| {
            let means = sums[&m].iter().map(|(k, (s, n))| (*k, s / *n as f64)).collect();
            (m, means)
        })
        .collect())
}

fn run_label(path: &Path) -> String {
    let p = if path.is_dir() { path } else { path.parent().unwrap_or(path) };
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn compare(o: CompareOptions) -> Result<(), Failure> {
    if !(o.alpha > 0.0 && o.alpha < 1.0) {
        return Err(usage("--alpha must lie in (0, 1)"));
    }
    let mut series: Vec<(String, Cells<f64>)> = Vec::new();
    for (i, run) in o.runs.iter().enumerate() {
        let path = in_dir_or_file(run, "ape_records.csv");
        let label = format!("{}#{}", run_label(run), i + 1);
        for (method, ape) in read_ape(&path)? {
            series.push((format!("{label}:{method}"), ape));
        }
    }
    let keys: BTreeSet<(NaiveDate, usize)> = series.iter().flat_map(|s| s.1.keys().copied()).collect();
    for (name, ape) in &series {
        let missing: Vec<String> =
            keys.iter().filter(|k| !ape.contains_key(*k)).take(10).map(|(d, h)| format!("{d} h{h}")).collect();
        if !missing.is_empty() {
            return Err(Failure::Runtime(
                rfnn_core::Error::Pairing(format!("{name} lacks records for {}", missing.join(", "))).to_string(),
            ));
        }
    }
    let vectors: Vec<Vec<f64>> = series.iter().map(|s| s.1.values().copied().collect()).collect();
    let k = series.len();
    let mut matrix = vec![vec!['.'; k]; k];
    let mut out = o.out.as_ref().map(|p| create(p).map(csv::Writer::from_writer)).transpose()?;
    if let Some(w) = out.as_mut() {
        w.write_record(["a", "b", "n_eff", "w_plus", "w_minus", "p_value", "exact", "decision"])?;
    }
    for i in 0..k {
        for j in i + 1..k {
            let r = wilcoxon_signed_rank(&vectors[i], &vectors[j], o.alpha)?;
            let (cij, cji) = match r.decision {
                WilcoxonDecision::ABetter => ('<', '>'),
                WilcoxonDecision::BBetter => ('>', '<'),
                WilcoxonDecision::Indistinguishable => ('=', '='),
            };
            matrix[i][j] = cij;
            matrix[j][i] = cji;
            if let Some(w) = out.as_mut() {
                let decision = match r.decision {
                    WilcoxonDecision::ABetter => "a_better",
                    WilcoxonDecision::BBetter => "b_better",
                    WilcoxonDecision::Indistinguishable => "indistinguishable",
                };
                w.write_record([
                    series[i].0.clone(),
                    series[j].0.clone(),
                    r.n_eff.to_string(),
                    r.w_plus.to_string(),
                    r.w_minus.to_string(),
                    r.p_value.to_string(),
                    r.exact.to_string(),
                    decision.to_string(),
                ])?;
            }
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    println!("'<' row has significantly lower APE than column, '>' higher, '=' indistinguishable (alpha {})", o.alpha);
    for (i, (name, _)) in series.iter().enumerate() {
        println!("[{}] {name}", i + 1);
    }
    print!("    ");
    (1..=k).for_each(|j| print!("{j:>4}"));
    println!();
    for (i, row) in matrix.iter().enumerate() {
        print!("{:>4}", i + 1);
        row.iter().for_each(|c| print!("{c:>4}"));
        println!();
    }
    Ok(())
}
