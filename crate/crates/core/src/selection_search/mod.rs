//! Rolling-origin backtesting, the two-stage selection score and a budgeted
//! PUCT search over forecaster configurations.

use thiserror::Error;

use crate::forecasters::ForecastError;
use crate::scoring::ScoreError;

mod rolling;
mod search;
mod split;
mod tree;

pub use rolling::{
    rolling_scores, rolling_validation_score, BacktestOptions, RollingEvaluator, RollingScores,
};
pub use search::{
    run_search, select_final_node, AlwaysPass, Budget, EvaluationError, Evaluator,
    FinalSelection, Gate, MutationProposer, NodeSelection, Proposer, SearchOptions,
    SearchOutcome, TrajectoryRow, DEFAULT_PENALTY,
};
pub use split::{DateRange, EvaluationSplit};
pub use tree::{puct_select, reward, SearchNode, SearchTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid date range: {0}")]
    InvalidRange(String),
    #[error("evaluation split: {0}")]
    InvalidSplit(String),
    #[error("no origin in the evaluation block has scorable truth")]
    NothingScorable,
    #[error("invalid budget: {0}")]
    InvalidBudget(&'static str),
    #[error("invalid search option: {0}")]
    InvalidOption(&'static str),
    #[error("empty search tree")]
    EmptyTree,
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Validation score plus twice the retrospective test score.
pub fn selection_score(validation: f64, test: f64) -> f64 {
    validation + 2.0 * test
}
