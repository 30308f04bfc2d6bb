//! Forecast error metrics and the Wilcoxon signed-rank test.
//!
//! Percentage errors are signed so that underprediction is positive:
//! `pe = 100 (actual - forecast) / actual`.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{param, Error, Result};

/// Largest effective sample size for which p-values are enumerated exactly.
pub const EXACT_MAX_N: usize = 12;

/// Minimum number of non-zero paired differences the test accepts.
pub const WILCOXON_MIN_N: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub date: NaiveDate,
    pub hour: usize,
    pub actual: f64,
    pub forecast: f64,
    pub pe: f64,
    pub ape: f64,
}

impl ErrorRecord {
    pub fn new(date: NaiveDate, hour: usize, actual: f64, forecast: f64) -> Result<Self> {
        if actual == 0.0 {
            return Err(Error::ZeroActual { index: hour });
        }
        let pe = 100.0 * (actual - forecast) / actual;
        Ok(Self { date, hour, actual, forecast, pe, ape: pe.abs() })
    }

    pub fn error(&self) -> f64 {
        self.actual - self.forecast
    }
}

/// One record per hour of `date`.
pub fn percentage_errors(date: NaiveDate, actual: &[f64], forecast: &[f64]) -> Result<Vec<ErrorRecord>> {
    if actual.len() != forecast.len() {
        return Err(Error::Shape(format!("{} actual values but {} forecasts", actual.len(), forecast.len())));
    }
    actual.iter().zip(forecast).enumerate().map(|(h, (&a, &f))| ErrorRecord::new(date, h, a, f)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    pub mape: f64,
    pub median_ape: f64,
    pub rmse: f64,
    pub mpe: f64,
    /// Sample standard deviation of PE; reported as 0 when `n == 1`.
    pub std_pe: f64,
    pub std_pe_defined: bool,
}

impl MetricsSummary {
    pub const NAMES: [&'static str; 5] = ["MAPE", "Median(APE)", "RMSE", "MPE", "Std(PE)"];

    pub fn values(&self) -> [f64; 5] {
        [self.mape, self.median_ape, self.rmse, self.mpe, self.std_pe]
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median with the midpoint rule for even counts. Panics on empty input.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Percentile `q ∈ [0, 100]` with linear interpolation between order
/// statistics. `sorted` must be ascending and nonempty.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(records: &[ErrorRecord]) -> Result<MetricsSummary> {
    if records.is_empty() {
        return param("cannot summarize an empty record set");
    }
    let n = records.len();
    let pe: Vec<f64> = records.iter().map(|r| r.pe).collect();
    let ape: Vec<f64> = records.iter().map(|r| r.ape).collect();
    let mpe = mean(&pe);
    let (std_pe, std_pe_defined) = if n > 1 {
        let ss: f64 = pe.iter().map(|p| (p - mpe).powi(2)).sum();
        ((ss / (n - 1) as f64).sqrt(), true)
    } else {
        (0.0, false)
    };
    let mse = records.iter().map(|r| r.error().powi(2)).sum::<f64>() / n as f64;
    Ok(MetricsSummary { n, mape: mean(&ape), median_ape: median(&ape), rmse: mse.sqrt(), mpe, std_pe, std_pe_defined })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonDecision {
    ABetter,
    BBetter,
    Indistinguishable,
}

impl WilcoxonDecision {
    pub fn flipped(self) -> Self {
        match self {
            Self::ABetter => Self::BBetter,
            Self::BBetter => Self::ABetter,
            Self::Indistinguishable => Self::Indistinguishable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Number of non-zero differences.
    pub n_eff: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
    pub decision: WilcoxonDecision,
}

/// Ranks of `|d|` (midranks for ties) for the non-zero differences, paired
/// with the sign of each difference.
pub fn signed_ranks(diffs: &[f64]) -> Vec<(f64, bool)> {
    let mut nz: Vec<(f64, bool)> = diffs.iter().filter(|d| **d != 0.0).map(|&d| (d.abs(), d > 0.0)).collect();
    nz.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ranked = Vec::with_capacity(nz.len());
    let mut i = 0;
    while i < nz.len() {
        let mut j = i;
        while j + 1 < nz.len() && nz[j + 1].0 == nz[i].0 {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        ranked.extend(nz[i..=j].iter().map(|&(_, pos)| (midrank, pos)));
        i = j + 1;
    }
    ranked
}

/// Exact two-sided p-value of `W+ = w_plus` under the null where each rank
/// carries an independent fair sign. Ranks must be multiples of 1/2.
pub fn exact_p_value(ranks: &[f64], w_plus: f64) -> f64 {
    // doubled ranks are integers, so the null distribution is a subset-sum count
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let obs = (2.0 * w_plus).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let lower: u64 = counts[..=obs.min(total)].iter().sum();
    let upper: u64 = counts[obs.min(total + 1)..].iter().sum();
    (2.0 * (lower.min(upper) as f64) / all).min(1.0)
}

/// Normal approximation with continuity correction and tie-corrected variance.
pub fn normal_p_value(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mu = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        tie_term += (j * j * j - j) as f64;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mu).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Paired two-sided Wilcoxon signed-rank test on `d = ape_a - ape_b`.
/// A significant result favours the sample with the smaller total.
pub fn wilcoxon_signed_rank(ape_a: &[f64], ape_b: &[f64], alpha: f64) -> Result<WilcoxonResult> {
    if ape_a.len() != ape_b.len() {
        return Err(Error::Shape(format!("paired samples differ in length: {} vs {}", ape_a.len(), ape_b.len())));
    }
    let diffs: Vec<f64> = ape_a.iter().zip(ape_b).map(|(a, b)| a - b).collect();
    let ranked = signed_ranks(&diffs);
    let n_eff = ranked.len();
    if n_eff == 0 {
        return Ok(WilcoxonResult {
            n_eff,
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            exact: true,
            decision: WilcoxonDecision::Indistinguishable,
        });
    }
    if n_eff < WILCOXON_MIN_N {
        return param(format!("only {n_eff} non-zero differences, at least {WILCOXON_MIN_N} required"));
    }
    let w_plus: f64 = ranked.iter().filter(|r| r.1).map(|r| r.0).sum();
    let w_minus: f64 = ranked.iter().filter(|r| !r.1).map(|r| r.0).sum();
    let ranks: Vec<f64> = ranked.iter().map(|r| r.0).collect();
    let exact = n_eff <= EXACT_MAX_N;
    let p_value = if exact { exact_p_value(&ranks, w_plus) } else { normal_p_value(&ranks, w_plus) };
    let decision = if p_value < alpha {
        let (sa, sb): (f64, f64) = (ape_a.iter().sum(), ape_b.iter().sum());
        if sa < sb {
            WilcoxonDecision::ABetter
        } else if sb < sa {
            WilcoxonDecision::BBetter
        } else {
            WilcoxonDecision::Indistinguishable
        }
    } else {
        WilcoxonDecision::Indistinguishable
    };
    Ok(WilcoxonResult { n_eff, w_plus, w_minus, statistic: w_plus.min(w_minus), p_value, exact, decision })
}

/// Table-style metrics CSV: one row per metric, one column per method.
pub fn write_metrics_csv<W: Write>(summaries: &[(String, MetricsSummary)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["metric".to_string()];
    header.extend(summaries.iter().map(|(name, _)| name.clone()));
    w.write_record(&header)?;
    for (i, metric) in MetricsSummary::NAMES.iter().enumerate() {
        let mut row = vec![metric.to_string()];
        row.extend(summaries.iter().map(|(_, s)| s.values()[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
