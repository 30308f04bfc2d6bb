//! Pattern encoder and decoder.
//!
//! An input sequence `e` is coded by its mean and its dispersion
//! `sqrt(Σ (e_t - mean)²)`; the x-pattern is the centered sequence divided by
//! the dispersion, so every x-pattern has zero mean and unit Euclidean norm.
//! The sequence `τ` periods ahead is coded with the *input's* coding variables
//! to form the y-pattern, and a predicted y-pattern is decoded with the same
//! variables. Because coding variables come from the previous period,
//! y-patterns are only comparable among targets of the same weekday, hence
//! one training set per weekday.

use std::collections::HashMap;
use std::io::Write;

use chrono::{NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::timeseries::SeasonalSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingVars {
    pub mean: f64,
    pub dispersion: f64,
}

impl CodingVars {
    pub const IDENTITY: CodingVars = CodingVars { mean: 0.0, dispersion: 1.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub coding: CodingVars,
    pub input_date: NaiveDate,
    pub target_date: NaiveDate,
    pub target_weekday: Weekday,
}

/// Pattern pairs sharing one target weekday.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub pairs: Vec<PatternPair>,
    pub n: usize,
    pub weekday: Weekday,
    /// Candidate pairs dropped because their input sequence was constant.
    pub skipped_degenerate: usize,
}

impl TrainingSet {
    /// Wraps pairs that already share `weekday` and pattern length.
    pub fn new(pairs: Vec<PatternPair>, weekday: Weekday) -> Result<Self> {
        let Some(first) = pairs.first() else {
            return param("training set needs at least one pair");
        };
        let n = first.x.len();
        let ny = first.y.len();
        if let Some(p) = pairs.iter().find(|p| p.target_weekday != weekday) {
            return param(format!("pair for {} in a {weekday} training set", p.target_weekday));
        }
        if pairs.iter().any(|p| p.x.len() != n || p.y.len() != ny) {
            return Err(Error::Shape("pattern lengths differ within training set".into()));
        }
        Ok(Self { pairs, n, weekday, skipped_degenerate: 0 })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn inputs(&self) -> Vec<&[f64]> {
        self.pairs.iter().map(|p| p.x.as_slice()).collect()
    }

    pub fn targets(&self) -> Vec<&[f64]> {
        self.pairs.iter().map(|p| p.y.as_slice()).collect()
    }

    /// Subset by position, keeping the weekday.
    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        TrainingSet {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            n: self.n,
            weekday: self.weekday,
            skipped_degenerate: 0,
        }
    }
}

fn degeneracy_threshold(n: usize, mean: f64) -> f64 {
    1e-12 * n as f64 * mean.abs().max(1.0)
}

/// x-pattern and coding variables of one sequence.
pub fn encode_x(values: &[f64]) -> Result<(Vec<f64>, CodingVars)> {
    let n = values.len();
    if n == 0 {
        return param("cannot encode an empty sequence");
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let dispersion = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    let threshold = degeneracy_threshold(n, mean);
    if dispersion.is_nan() || dispersion <= threshold {
        return Err(Error::DegenerateDispersion { dispersion, threshold });
    }
    let x = values.iter().map(|v| (v - mean) / dispersion).collect();
    Ok((x, CodingVars { mean, dispersion }))
}

/// y-pattern of a future sequence under the input's coding variables.
pub fn encode_y(future: &[f64], coding: CodingVars) -> Vec<f64> {
    debug_assert!(coding.dispersion > 0.0);
    future.iter().map(|v| (v - coding.mean) / coding.dispersion).collect()
}

/// Inverse of [`encode_y`]: maps a predicted y-pattern back to series units.
pub fn decode(y_hat: &[f64], coding: CodingVars) -> Vec<f64> {
    y_hat.iter().map(|y| y * coding.dispersion + coding.mean).collect()
}

/// Collects every pair (input, target) with `target.index - input.index == tau`,
/// target on `weekday` and dated strictly before `cutoff`. Sequences absent
/// from `sequences` (excluded or incomplete days) never pair.
pub fn build_training_set(
    sequences: &[SeasonalSequence],
    weekday: Weekday,
    tau: usize,
    cutoff: NaiveDate,
) -> Result<TrainingSet> {
    if tau == 0 {
        return param("forecast horizon must be at least 1");
    }
    let by_index: HashMap<usize, &SeasonalSequence> = sequences.iter().map(|s| (s.index, s)).collect();
    let mut pairs = Vec::new();
    let mut skipped = 0;
    let mut n = None;
    for target in sequences {
        if target.weekday != weekday || target.date >= cutoff {
            continue;
        }
        let Some(input) = target.index.checked_sub(tau).and_then(|i| by_index.get(&i)) else {
            continue;
        };
        match encode_x(&input.values) {
            Ok((x, coding)) => {
                n.get_or_insert(x.len());
                pairs.push(PatternPair {
                    y: encode_y(&target.values, coding),
                    x,
                    coding,
                    input_date: input.date,
                    target_date: target.date,
                    target_weekday: target.weekday,
                });
            }
            Err(Error::DegenerateDispersion { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} pair(s) with constant input sequence");
    }
    match n {
        Some(n) => Ok(TrainingSet { pairs, n, weekday, skipped_degenerate: skipped }),
        None => Err(Error::EmptyTrainingSet { weekday: weekday.to_string(), cutoff }),
    }
}

/// One row per pair: dates, x_1..x_n, y_1..y_n, mean, dispersion.
pub fn write_patterns_csv<W: Write>(pairs: &[PatternPair], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = pairs.first().map_or(0, |p| p.x.len());
    let mut header = vec!["input_date".to_string(), "target_date".to_string(), "target_weekday".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("y{i}")));
    header.push("mean".into());
    header.push("dispersion".into());
    w.write_record(&header)?;
    for p in pairs {
        let mut row = vec![p.input_date.to_string(), p.target_date.to_string(), p.target_weekday.to_string()];
        row.extend(p.x.iter().chain(&p.y).map(f64::to_string));
        row.push(p.coding.mean.to_string());
        row.push(p.coding.dispersion.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
