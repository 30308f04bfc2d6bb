//! Grid search with k-fold cross-validation over node count and smoothing
//! parameter.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{decode, TrainingSet};
use crate::error::{param, Error, Result};
use crate::randnn::{train, HyperParams, Method, Smoothing};
use crate::seed::{derive_seed, rng_for};

const FOLD_TAG: u64 = 0xF01D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub m_values: Vec<usize>,
    pub smoothing_values: Vec<f64>,
}

fn strictly_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl Grid {
    pub fn new(m_values: Vec<usize>, smoothing_values: Vec<f64>) -> Result<Self> {
        if m_values.is_empty() || smoothing_values.is_empty() {
            return param("grid lists must be nonempty");
        }
        if !strictly_increasing(&m_values) || !strictly_increasing(&smoothing_values) {
            return param("grid lists must be strictly increasing");
        }
        if m_values[0] == 0 {
            return param("node counts must be positive");
        }
        Ok(Self { m_values, smoothing_values })
    }

    pub fn len(&self) -> usize {
        self.m_values.len() * self.smoothing_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gridpoints in (m, smoothing) lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.m_values.iter().flat_map(move |&m| self.smoothing_values.iter().map(move |&s| (m, s)))
    }
}

/// Search grids used by default: m ∈ {5, 10, …, 50} and a method-specific
/// smoothing list.
pub fn default_grid(method: Method) -> Result<Grid> {
    let m_values: Vec<usize> = (1..=10).map(|i| 5 * i).collect();
    let smoothing: Vec<f64> = match method {
        // 0.02..0.2 step 0.02, then 0.4..1 step 0.2
        Method::Standard | Method::RaM => {
            (1..=10).map(|i| i as f64 / 50.0).chain((2..=5).map(|i| i as f64 / 5.0)).collect()
        }
        // degrees: 2..40 step 2, then 45..90 step 5
        Method::RAlphaM => (1..=20).map(|i| 2.0 * i as f64).chain((9..=18).map(|i| 5.0 * i as f64)).collect(),
        Method::Ddm => (25..=69).step_by(2).map(|k| k as f64).collect(),
    };
    Grid::new(m_values, smoothing)
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return param(format!("need at least 2 folds, got {k}"));
    }
    if n < k {
        return param(format!("{n} samples cannot fill {k} folds"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, &[FOLD_TAG]));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Validation criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvLoss {
    /// Mean absolute error between predicted and true y-patterns.
    #[default]
    PatternMae,
    /// MAPE after decoding both patterns back to series units.
    DecodedMape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub folds: usize,
    pub trials_per_fold: usize,
    pub loss: CvLoss,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { folds: 5, trials_per_fold: 3, loss: CvLoss::PatternMae }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvScore {
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub std: f64,
    pub fits: usize,
}

fn validation_loss(loss: CvLoss, pred: &[f64], pair: &crate::encoding::PatternPair) -> f64 {
    match loss {
        CvLoss::PatternMae => pred.iter().zip(&pair.y).map(|(p, y)| (p - y).abs()).sum::<f64>() / pred.len() as f64,
        CvLoss::DecodedMape => {
            let f = decode(pred, pair.coding);
            let a = decode(&pair.y, pair.coding);
            100.0 * a.iter().zip(&f).map(|(a, f)| ((a - f) / a).abs()).sum::<f64>() / a.len() as f64
        }
    }
}

/// Mean validation error of `(method, hyper)` over `settings.folds` folds,
/// each averaged over `settings.trials_per_fold` independently seeded layers.
/// `hyper.seed` is ignored; per-trial seeds derive from `seed`.
pub fn cross_validate(
    phi: &TrainingSet,
    method: Method,
    hyper: &HyperParams,
    settings: &CvSettings,
    seed: u64,
) -> Result<CvScore> {
    if settings.trials_per_fold == 0 {
        return param("trials per fold must be at least 1");
    }
    let folds = kfold_split(phi.len(), settings.folds, seed)?;
    let mut fold_scores = Vec::with_capacity(folds.len());
    let mut fits = 0;
    for (f, held_out) in folds.iter().enumerate() {
        let train_idx: Vec<usize> =
            folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, fold)| fold.iter().copied()).collect();
        let train_set = phi.subset(&train_idx);
        let (xs, ys) = (train_set.inputs(), train_set.targets());
        let mut total = 0.0;
        for t in 0..settings.trials_per_fold {
            let hp = hyper.with_seed(derive_seed(seed, &[f as u64, t as u64]));
            let model = train(method, &hp, &xs, &ys)?;
            fits += 1;
            let mut err = 0.0;
            for &i in held_out {
                let pair = &phi.pairs[i];
                err += validation_loss(settings.loss, &model.predict(&pair.x)?, pair);
            }
            total += err / held_out.len() as f64;
        }
        fold_scores.push(total / settings.trials_per_fold as f64);
    }
    let k = fold_scores.len() as f64;
    let mean = fold_scores.iter().sum::<f64>() / k;
    let std = (fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    Ok(CvScore { mean, std, fits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointScore {
    pub m: usize,
    pub smoothing: f64,
    pub mean: f64,
    pub std: f64,
    /// False when the generator rejected the gridpoint on this data (a
    /// neighbour count larger than a training fold, for instance).
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub method: Method,
    pub best: HyperParams,
    pub table: Vec<GridPointScore>,
    pub folds: usize,
    /// Number of networks trained during the search.
    pub fits: usize,
}

/// Index of the best feasible row: lowest mean, ties to smaller m and then
/// smaller smoothing value.
pub fn best_index(table: &[GridPointScore]) -> Option<usize> {
    table
        .iter()
        .enumerate()
        .filter(|(_, r)| r.feasible)
        .min_by(|(_, a), (_, b)| {
            a.mean.total_cmp(&b.mean).then(a.m.cmp(&b.m)).then(a.smoothing.total_cmp(&b.smoothing))
        })
        .map(|(i, _)| i)
}

/// Cross-validates every gridpoint (in parallel) and returns the best one.
pub fn grid_search(
    phi: &TrainingSet,
    method: Method,
    grid: &Grid,
    settings: &CvSettings,
    seed: u64,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return param("empty grid");
    }
    let points: Vec<(usize, f64)> = grid.points().collect();
    let scored: Vec<(GridPointScore, usize)> = points
        .par_iter()
        .map(|&(m, s)| {
            let hp = HyperParams::new(m, Smoothing::for_method(method, s)?, seed);
            match cross_validate(phi, method, &hp, settings, seed) {
                Ok(score) => Ok((
                    GridPointScore { m, smoothing: s, mean: score.mean, std: score.std, feasible: true },
                    score.fits,
                )),
                Err(Error::Parameter(msg)) if method == Method::Ddm => {
                    log::debug!("gridpoint (m={m}, k={s}) infeasible: {msg}");
                    Ok((GridPointScore { m, smoothing: s, mean: f64::INFINITY, std: f64::NAN, feasible: false }, 0))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let fits = scored.iter().map(|s| s.1).sum();
    let table: Vec<GridPointScore> = scored.into_iter().map(|s| s.0).collect();
    let best = best_index(&table).ok_or_else(|| Error::Parameter("no feasible gridpoint".into()))?;
    let row = &table[best];
    Ok(TuneResult {
        method,
        best: HyperParams::new(row.m, Smoothing::for_method(method, row.smoothing)?, seed),
        folds: settings.folds,
        fits,
        table,
    })
}

impl TuneResult {
    /// Writes `method,m,smoothing,mean,std,feasible`, one row per gridpoint.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "m", "smoothing", "mean", "std", "feasible"])?;
        for r in &self.table {
            w.write_record([
                self.method.to_string(),
                r.m.to_string(),
                r.smoothing.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.feasible.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
