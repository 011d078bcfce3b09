//! Evaluation and ensembling toolkit for quantile forecast hubs.
//!
//! The crate scores weekly count forecasts with proper scoring rules, ranks
//! models on shared task sets, combines member forecasts into ensembles,
//! backtests reference forecasters over rolling origins and searches
//! forecaster configurations with a budgeted PUCT tree search.

pub mod ensemble;
pub mod forecasters;
pub mod io;
pub mod exec;
pub mod leaderboard;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod selection_search;
pub mod stats;

pub use exec::Execution;
pub use model::{
    build_task_space, lookup_truth, Dataset, Horizon, Location, LocationTable, ObservationPoint,
    ObservationSeries, Provenance, QuantileForecast, QuantileLevels, SampleForecast, TaskKey,
};
pub use scoring::{Metric, ScoreRecord};
