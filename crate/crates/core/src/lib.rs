//! Forecasting of time series with multiple seasonal cycles using randomized
//! single-hidden-layer feedforward networks.
//!
//! The series is cut into daily sequences, each sequence is normalized into a
//! unit-length input pattern, and a network whose hidden layer is generated
//! rather than trained maps input patterns to output patterns of the
//! forecasted day. Only the output weights are fitted, in closed form.
//!
//! Modules, bottom-up:
//! - [`timeseries`]: CSV ingestion, day exclusion, slicing into seasonal sequences, synthetic data.
//! - [`encoding`]: pattern encoder/decoder and weekday-grouped training sets.
//! - [`numerics`]: sigmoid, SVD pseudoinverse solve, kNN, hyperplane fitting.
//! - [`randnn`]: hidden-node generators, output-weight fitting, prediction.
//! - [`tuning`]: grid search with k-fold cross-validation.
//! - [`evaluation`]: error metrics and the Wilcoxon signed-rank test.
//! - [`pipeline`]: the rolling per-day experiment and its report bundle.

pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod pipeline;
pub mod randnn;
pub mod seed;
pub mod timeseries;
pub mod tuning;

pub use encoding::{CodingVars, PatternPair, TrainingSet};
pub use error::{Error, Result};
pub use evaluation::{ErrorRecord, MetricsSummary, WilcoxonDecision, WilcoxonResult};
pub use numerics::Matrix;
pub use pipeline::{ExperimentConfig, ExperimentReport, ForecastMethod};
pub use randnn::{HiddenLayer, HyperParams, Method, RandFnnModel, Smoothing};
pub use timeseries::{SeasonalSequence, TimeSeries};
pub use tuning::{Grid, TuneResult};
