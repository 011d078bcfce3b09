//! End-to-end operations over parsed submissions and truth data.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ensemble::{combine, EnsembleError, EnsembleSpec};
use crate::exec::Execution;
use crate::io::{IoError, SubmissionFile};
use crate::leaderboard::{LeaderboardError, ScoreTable};
use crate::model::{build_task_space, Dataset, Horizon, ModelError, TaskKey};
use crate::scoring::{score_quantiles, Metric, ScoreError, ScoreRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("model {0} appears in more than one submission set")]
    DuplicateModel(String),
    #[error("model {model}: task {task} submitted twice")]
    DuplicateTask { model: String, task: String },
    #[error("submissions disagree on target: {0} vs {1}")]
    TargetMismatch(String, String),
    #[error("no submissions")]
    NoSubmissions,
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Leaderboard(#[from] LeaderboardError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Merges per-date files of one model into a single submission.
pub fn merge_submissions(parts: Vec<SubmissionFile>) -> Result<SubmissionFile, PipelineError> {
    let mut iter = parts.into_iter();
    let mut merged = iter.next().ok_or(PipelineError::NoSubmissions)?;
    for part in iter {
        if part.target != merged.target {
            return Err(PipelineError::TargetMismatch(merged.target, part.target));
        }
        for (task, f) in part.forecasts {
            if merged.forecasts.contains_key(&task) {
                return Err(PipelineError::DuplicateTask {
                    model: merged.model_id.clone(),
                    task: task.to_string(),
                });
            }
            merged.forecasts.insert(task, f);
        }
    }
    Ok(merged)
}

/// Every date × location × horizon combination whose target week has truth.
pub fn task_space_with_truth(
    dates: &[chrono::NaiveDate],
    locations: &[String],
    horizons: &[Horizon],
    data: &Dataset,
) -> Result<Vec<TaskKey>, PipelineError> {
    Ok(build_task_space(dates, locations, horizons)?
        .into_iter()
        .filter(|t| data.truth(t).is_some())
        .collect())
}

/// Union of submitted tasks that have truth.
pub fn submitted_task_space(subs: &[SubmissionFile], data: &Dataset) -> Vec<TaskKey> {
    let set: BTreeSet<&TaskKey> = subs
        .iter()
        .flat_map(|s| s.forecasts.keys())
        .filter(|t| data.truth(t).is_some())
        .collect();
    set.into_iter().cloned().collect()
}

/// Scores every submitted forecast in `task_space` that has truth.
pub fn score_submissions(
    subs: &[SubmissionFile],
    data: &Dataset,
    metrics: &[Metric],
    task_space: &[TaskKey],
    exec: Execution,
) -> Result<ScoreTable, PipelineError> {
    let mut seen = BTreeSet::new();
    for s in subs {
        if !seen.insert(s.model_id.as_str()) {
            return Err(PipelineError::DuplicateModel(s.model_id.clone()));
        }
    }
    let space: BTreeSet<&TaskKey> = task_space.iter().collect();
    let mut jobs = Vec::new();
    for s in subs {
        for (task, f) in &s.forecasts {
            if !space.contains(task) {
                continue;
            }
            if let Some(y) = data.truth(task) {
                jobs.push((s.model_id.as_str(), task, f.values(), y));
            }
        }
    }
    let scored = exec.map(&jobs, |(model, task, values, y)| {
        metrics
            .iter()
            .map(|&metric| {
                Ok(ScoreRecord {
                    model_id: model.to_string(),
                    task: (*task).clone(),
                    metric,
                    value: score_quantiles(metric, &values[..], *y)?,
                })
            })
            .collect::<Result<Vec<_>, ScoreError>>()
    });
    let mut table = ScoreTable::new(task_space.iter().cloned());
    for recs in scored {
        for r in recs? {
            table.insert(r)?;
        }
    }
    Ok(table)
}

/// Ensemble of the spec's members over every task any member submitted.
pub fn ensemble_submissions(
    spec: &EnsembleSpec,
    subs: &[SubmissionFile],
    model_id: &str,
) -> Result<SubmissionFile, PipelineError> {
    let by_model: BTreeMap<&str, &SubmissionFile> =
        subs.iter().map(|s| (s.model_id.as_str(), s)).collect();
    let members: Vec<&SubmissionFile> = spec
        .members()
        .iter()
        .filter_map(|m| by_model.get(m.as_str()).copied())
        .collect();
    let target = members
        .first()
        .map(|s| s.target.clone())
        .ok_or(PipelineError::NoSubmissions)?;
    if let Some(other) = members.iter().find(|s| s.target != target) {
        return Err(PipelineError::TargetMismatch(target, other.target.clone()));
    }
    let tasks: BTreeSet<&TaskKey> = members.iter().flat_map(|s| s.forecasts.keys()).collect();
    let mut forecasts = BTreeMap::new();
    for task in tasks {
        let available: BTreeMap<String, _> = members
            .iter()
            .filter_map(|s| s.forecasts.get(task).map(|f| (s.model_id.clone(), f.clone())))
            .collect();
        forecasts.insert(task.clone(), combine(spec, &available)?);
    }
    Ok(SubmissionFile {
        model_id: model_id.to_string(),
        target,
        forecasts,
    })
}
