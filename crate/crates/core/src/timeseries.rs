//! Hourly series ingestion, calendar exclusions and slicing into seasonal
//! sequences of the shortest cycle.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::{BufRead, Read, Write};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::seed::rng_for;

/// Hours in one calendar day; the series resolution is fixed at one hour.
pub const HOURS_PER_DAY: usize = 24;

const TIMESTAMP_FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub timestamp: NaiveDateTime,
    pub value: f64,
}

/// Hourly observations in strictly increasing time order, plus the set of
/// days flagged as excluded (holidays and other atypical days).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    observations: Vec<Observation>,
    excluded: BTreeSet<NaiveDate>,
}

/// One seasonal cycle of the shortest period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSequence {
    pub values: Vec<f64>,
    pub date: NaiveDate,
    pub weekday: Weekday,
    /// Ordinal position in the series, counted from the first observed day.
    /// Excluded or dropped days leave gaps.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalSplit {
    pub sequences: Vec<SeasonalSequence>,
    /// Days dropped because they were not complete.
    pub incomplete_days: Vec<NaiveDate>,
}

#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub value_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { timestamp_column: "timestamp".into(), value_column: "value".into() }
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

impl TimeSeries {
    /// Builds a series from observations, enforcing hourly, strictly
    /// increasing timestamps. Line numbers in errors are 1-based positions
    /// in `observations`.
    pub fn from_observations(observations: Vec<Observation>) -> Result<Self> {
        for (i, obs) in observations.iter().enumerate() {
            check_observation(obs, i + 1, i.checked_sub(1).map(|p| &observations[p]))?;
        }
        Ok(Self { observations, excluded: BTreeSet::new() })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn excluded(&self) -> &BTreeSet<NaiveDate> {
        &self.excluded
    }

    pub fn is_excluded(&self, date: NaiveDate) -> bool {
        self.excluded.contains(&date)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Distinct calendar days that carry at least one observation.
    pub fn days(&self) -> Vec<NaiveDate> {
        let mut days: Vec<NaiveDate> = self.observations.iter().map(|o| o.timestamp.date()).collect();
        days.dedup();
        days
    }

    /// Marks `dates` as excluded. Returns the new series and the number of
    /// dates that matched no observed day.
    pub fn exclude_days(&self, dates: &BTreeSet<NaiveDate>) -> (TimeSeries, usize) {
        let present: BTreeSet<NaiveDate> = self.days().into_iter().collect();
        let mut out = self.clone();
        let mut unknown = 0;
        for d in dates {
            if present.contains(d) {
                out.excluded.insert(*d);
            } else {
                unknown += 1;
            }
        }
        if unknown > 0 {
            log::warn!("{unknown} excluded date(s) not present in the series");
        }
        (out, unknown)
    }

    /// Slices the series into sequences of `n` hours. `n` must divide 24; each
    /// complete, non-excluded day yields `24 / n` sequences.
    pub fn split_seasonal(&self, n: usize) -> Result<SeasonalSplit> {
        if n == 0 || !HOURS_PER_DAY.is_multiple_of(n) {
            return param(format!("period length {n} does not divide {HOURS_PER_DAY}"));
        }
        let per_day = HOURS_PER_DAY / n;
        let Some(first) = self.observations.first() else {
            return Ok(SeasonalSplit { sequences: Vec::new(), incomplete_days: Vec::new() });
        };
        let first_day = first.timestamp.date();

        let mut by_day: BTreeMap<NaiveDate, Vec<&Observation>> = BTreeMap::new();
        for obs in &self.observations {
            by_day.entry(obs.timestamp.date()).or_default().push(obs);
        }

        let mut sequences = Vec::new();
        let mut incomplete_days = Vec::new();
        for (date, obs) in by_day {
            // hourly and strictly increasing, so 24 rows means every hour
            if obs.len() != HOURS_PER_DAY {
                incomplete_days.push(date);
                continue;
            }
            if self.excluded.contains(&date) {
                continue;
            }
            let day_ordinal = (date - first_day).num_days() as usize;
            for (block, chunk) in obs.chunks(n).enumerate() {
                sequences.push(SeasonalSequence {
                    values: chunk.iter().map(|o| o.value).collect(),
                    date,
                    weekday: date.weekday(),
                    index: day_ordinal * per_day + block,
                });
            }
        }
        if !incomplete_days.is_empty() {
            log::warn!("dropped {} incomplete day(s)", incomplete_days.len());
        }
        Ok(SeasonalSplit { sequences, incomplete_days })
    }

    /// Writes the standard `timestamp,value` CSV. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "value"])?;
        for obs in &self.observations {
            w.write_record([obs.timestamp.format("%Y-%m-%dT%H:%M").to_string(), obs.value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_observation(obs: &Observation, line: usize, prev: Option<&Observation>) -> Result<()> {
    let ts = obs.timestamp;
    if !obs.value.is_finite() {
        return Err(Error::Parse { line, message: format!("non-finite value {}", obs.value) });
    }
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(Error::Resolution { line, message: format!("timestamp {ts} is not on an hour boundary") });
    }
    if let Some(p) = prev {
        if p.timestamp == ts {
            return Err(Error::Duplicate { line, timestamp: ts.to_string() });
        }
        if p.timestamp > ts {
            return Err(Error::Resolution { line, message: format!("timestamp {ts} precedes {}", p.timestamp) });
        }
    }
    Ok(())
}

/// Reads a CSV with a header row. Line numbers in errors count the header as
/// line 1.
pub fn load_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let (ts_col, val_col) = match (col(&schema.timestamp_column), col(&schema.value_column)) {
        (Ok(t), Ok(v)) => (t, v),
        _ if headers.is_empty() => return Err(Error::Parse { line: 1, message: "no observations".into() }),
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };

    let mut observations: Vec<Observation> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let field = |c: usize| record.get(c).ok_or_else(|| Error::Parse { line, message: "missing field".into() });
        let raw_ts = field(ts_col)?;
        let timestamp = parse_timestamp(raw_ts)
            .ok_or_else(|| Error::Parse { line, message: format!("bad timestamp `{raw_ts}`") })?;
        let raw_val = field(val_col)?;
        let value: f64 =
            raw_val.parse().map_err(|_| Error::Parse { line, message: format!("bad value `{raw_val}`") })?;
        let obs = Observation { timestamp, value };
        check_observation(&obs, line, observations.last())?;
        observations.push(obs);
    }
    if observations.is_empty() {
        return Err(Error::Parse { line: 1, message: "no observations".into() });
    }
    Ok(TimeSeries { observations, excluded: BTreeSet::new() })
}

/// Parses an exclusion list: one `YYYY-MM-DD` per line, `#` starts a comment.
pub fn read_exclusion_list<R: BufRead>(reader: R) -> Result<BTreeSet<NaiveDate>> {
    let mut dates = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let date = NaiveDate::parse_from_str(content, "%Y-%m-%d")
            .map_err(|e| Error::Parse { line: i + 1, message: format!("bad date `{content}`: {e}") })?;
        dates.insert(date);
    }
    Ok(dates)
}

/// Parameters of the synthetic three-seasonality generator.
///
/// The noiseless value at hour `t` is
/// `base * Y(t) * (L(w) + daily_amplitude * A(w) * d(h))` where `d` is a
/// zero-mean two-harmonic daily profile, `L` and `A` are weekday level and
/// amplitude factors (weekends lower by `weekly_modulation`), and
/// `Y(t) = 1 + yearly_modulation * cos(2π (t - mid-January) / year)`.
/// Gaussian noise with standard deviation `noise_level * base` is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_base")]
    pub base: f64,
    pub daily_amplitude: f64,
    pub weekly_modulation: f64,
    pub yearly_modulation: f64,
    pub noise_level: f64,
    pub start_date: NaiveDate,
    pub days: usize,
}

fn default_base() -> f64 {
    1000.0
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            base: default_base(),
            daily_amplitude: 0.3,
            weekly_modulation: 0.2,
            yearly_modulation: 0.15,
            noise_level: 0.01,
            start_date: NaiveDate::from_ymd_opt(2012, 1, 1).unwrap(),
            days: 1096,
        }
    }
}

const DAYS_PER_YEAR: f64 = 365.2425;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base.is_nan() || self.base <= 0.0 || self.daily_amplitude.is_nan() || self.daily_amplitude <= 0.0 {
            return param("base and daily amplitude must be positive");
        }
        if !(0.0..1.0).contains(&self.weekly_modulation) || !(0.0..1.0).contains(&self.yearly_modulation) {
            return param("weekly and yearly modulation must lie in [0, 1)");
        }
        if !self.noise_level.is_finite() || self.noise_level < 0.0 {
            return param("noise level must be non-negative");
        }
        if self.days < 14 {
            return param(format!("at least 14 days required, got {}", self.days));
        }
        Ok(())
    }

    fn weekday_factors(&self, w: Weekday) -> (f64, f64) {
        match w {
            Weekday::Sat => (1.0 - 0.6 * self.weekly_modulation, 0.85),
            Weekday::Sun => (1.0 - self.weekly_modulation, 0.75),
            _ => (1.0, 1.0),
        }
    }

    /// Multiplicative yearly factor at `ts`.
    pub fn yearly_factor(&self, ts: NaiveDateTime) -> f64 {
        let epoch = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let days = (ts.date() - epoch).num_days() as f64 + ts.hour() as f64 / 24.0;
        1.0 + self.yearly_modulation * (2.0 * PI * (days - 15.0) / DAYS_PER_YEAR).cos()
    }

    /// Value at `ts` before noise and clamping.
    pub fn noiseless_value(&self, ts: NaiveDateTime) -> f64 {
        let h = ts.hour() as f64;
        let daily = (2.0 * PI * (h - 8.0) / 24.0).sin() + 0.35 * (4.0 * PI * (h - 2.0) / 24.0).sin();
        let (level, amp) = self.weekday_factors(ts.weekday());
        self.base * self.yearly_factor(ts) * (level + self.daily_amplitude * amp * daily)
    }

    /// Standard deviation of the additive noise, in series units.
    pub fn noise_std(&self) -> f64 {
        self.noise_level * self.base
    }

    fn floor(&self) -> f64 {
        1e-3 * self.base
    }
}

/// Generates a synthetic hourly series; identical for identical `seed`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<TimeSeries> {
    spec.validate()?;
    let mut rng = rng_for(seed, &[0x5EED]);
    let noise = Normal::new(0.0, spec.noise_std()).map_err(|e| Error::Parameter(e.to_string()))?;
    let start = spec.start_date.and_hms_opt(0, 0, 0).unwrap();
    let observations = (0..spec.days * HOURS_PER_DAY)
        .map(|k| {
            let timestamp = start + chrono::Duration::hours(k as i64);
            let mut value = spec.noiseless_value(timestamp);
            if spec.noise_level > 0.0 {
                value += noise.sample(&mut rng);
            }
            Observation { timestamp, value: value.max(spec.floor()) }
        })
        .collect();
    Ok(TimeSeries { observations, excluded: BTreeSet::new() })
}
