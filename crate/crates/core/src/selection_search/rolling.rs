use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};

use super::search::{EvaluationError, Evaluator};
use super::split::DateRange;
use super::SearchError;
use crate::exec::Execution;
use crate::forecasters::{Forecaster, ForecasterConfig};
use crate::model::{Dataset, Horizon, TaskKey};
use crate::scoring::{score_quantiles, Metric};
use crate::stats::mean;

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestOptions {
    pub metric: Metric,
    pub horizons: Vec<Horizon>,
    /// Weeks of reporting delay: an origin sees data dated up to
    /// `origin − data_lag_weeks`.
    pub data_lag_weeks: u32,
    pub exec: Execution,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Wis,
            horizons: Horizon::all().to_vec(),
            data_lag_weeks: 1,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RollingScores {
    pub per_task: BTreeMap<TaskKey, f64>,
    /// Origins skipped because none of their targets had truth.
    pub omitted: Vec<NaiveDate>,
}

impl RollingScores {
    pub fn mean(&self) -> Option<f64> {
        if self.per_task.is_empty() {
            return None;
        }
        let v: Vec<f64> = self.per_task.values().copied().collect();
        Some(mean(&v))
    }
}

/// Scores `forecaster` at every origin, over each location with data and
/// each horizon whose target week has truth.
pub fn rolling_scores(
    forecaster: &dyn Forecaster,
    data: &Dataset,
    origins: &[NaiveDate],
    opts: &BacktestOptions,
) -> Result<RollingScores, SearchError> {
    let per_origin = opts.exec.map(origins, |&origin| {
        score_origin(forecaster, data, origin, opts)
    });
    let mut out = RollingScores::default();
    for (origin, res) in origins.iter().zip(per_origin) {
        let scores = res?;
        if scores.is_empty() {
            log::warn!("origin {origin}: no scorable targets, omitted");
            out.omitted.push(*origin);
        }
        out.per_task.extend(scores);
    }
    Ok(out)
}

fn score_origin(
    forecaster: &dyn Forecaster,
    data: &Dataset,
    origin: NaiveDate,
    opts: &BacktestOptions,
) -> Result<Vec<(TaskKey, f64)>, SearchError> {
    let mut tasks = Vec::new();
    let mut truths = Vec::new();
    for loc in data.series.keys() {
        for &h in &opts.horizons {
            let task = TaskKey::new(origin, loc.clone(), h);
            if let Some(y) = data.truth(&task) {
                tasks.push(task);
                truths.push(y);
            }
        }
    }
    if tasks.is_empty() {
        return Ok(Vec::new());
    }
    let visible = data.truncated(origin - Duration::weeks(opts.data_lag_weeks as i64));
    let forecasts = forecaster.forecast(&visible, &tasks)?;
    forecasts
        .iter()
        .zip(truths)
        .map(|(f, y)| Ok((f.task().clone(), score_quantiles(opts.metric, f.values(), y)?)))
        .collect()
}

/// Mean per-task score over every origin in `ranges`.
pub fn rolling_validation_score(
    forecaster: &dyn Forecaster,
    data: &Dataset,
    ranges: &[DateRange],
    opts: &BacktestOptions,
) -> Result<f64, SearchError> {
    let origins: Vec<NaiveDate> = ranges.iter().flat_map(|r| r.origins()).collect();
    rolling_scores(forecaster, data, &origins, opts)?
        .mean()
        .ok_or(SearchError::NothingScorable)
}

/// [`Evaluator`] that backtests a configuration over fixed date ranges.
pub struct RollingEvaluator<'a> {
    pub data: &'a Dataset,
    pub ranges: Vec<DateRange>,
    pub options: BacktestOptions,
}

impl Evaluator for RollingEvaluator<'_> {
    fn evaluate(&self, config: &ForecasterConfig) -> Result<f64, EvaluationError> {
        rolling_validation_score(config, self.data, &self.ranges, &self.options)
            .map_err(|e| EvaluationError(e.to_string()))
    }
}
