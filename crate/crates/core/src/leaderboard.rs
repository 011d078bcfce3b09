//! Model comparison over a shared task space: eligibility, mean scores,
//! pairwise relative skill, standardized ranks and per-horizon means.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use thiserror::Error;

use crate::exec::Execution;
use crate::model::{Horizon, TaskKey};
use crate::scoring::{Metric, ScoreRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LeaderboardError {
    #[error("duplicate score for model {model} task {task} metric {metric}")]
    DuplicateRecord {
        model: String,
        task: TaskKey,
        metric: Metric,
    },
    #[error("task {0} is outside the declared task space")]
    TaskOutsideSpace(TaskKey),
    #[error("non-finite score for model {model} task {task}")]
    NonFiniteScore { model: String, task: TaskKey },
    #[error("empty task space")]
    EmptyTaskSpace,
    #[error("eligibility threshold {0} outside (0,1]")]
    InvalidThreshold(f64),
    #[error("baseline model {0} has no scores for this metric")]
    MissingBaseline(String),
}

/// Per-task scores of every model, restricted to a declared task space.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    task_space: BTreeSet<TaskKey>,
    scores: BTreeMap<Metric, BTreeMap<String, BTreeMap<TaskKey, f64>>>,
}

impl ScoreTable {
    pub fn new(task_space: impl IntoIterator<Item = TaskKey>) -> Self {
        Self {
            task_space: task_space.into_iter().collect(),
            scores: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, record: ScoreRecord) -> Result<(), LeaderboardError> {
        if !self.task_space.contains(&record.task) {
            return Err(LeaderboardError::TaskOutsideSpace(record.task));
        }
        if record.value.is_nan() || (record.value.is_infinite() && record.metric != Metric::LogScore)
        {
            return Err(LeaderboardError::NonFiniteScore {
                model: record.model_id,
                task: record.task,
            });
        }
        let by_task = self
            .scores
            .entry(record.metric)
            .or_default()
            .entry(record.model_id.clone())
            .or_default();
        if by_task.contains_key(&record.task) {
            return Err(LeaderboardError::DuplicateRecord {
                model: record.model_id,
                task: record.task,
                metric: record.metric,
            });
        }
        by_task.insert(record.task, record.value);
        Ok(())
    }

    pub fn extend(
        &mut self,
        records: impl IntoIterator<Item = ScoreRecord>,
    ) -> Result<(), LeaderboardError> {
        records.into_iter().try_for_each(|r| self.insert(r))
    }

    pub fn task_space(&self) -> &BTreeSet<TaskKey> {
        &self.task_space
    }

    /// All model ids with at least one record under any metric.
    pub fn models(&self) -> BTreeSet<&str> {
        self.scores
            .values()
            .flat_map(|m| m.keys().map(String::as_str))
            .collect()
    }

    pub fn scores(&self, metric: Metric, model: &str) -> Option<&BTreeMap<TaskKey, f64>> {
        self.scores.get(&metric).and_then(|m| m.get(model))
    }

    pub fn metric_scores(&self, metric: Metric) -> Option<&BTreeMap<String, BTreeMap<TaskKey, f64>>> {
        self.scores.get(&metric)
    }

    /// Tasks for which `model` has a record under any metric.
    pub fn scored_tasks(&self, model: &str) -> BTreeSet<&TaskKey> {
        self.scores
            .values()
            .filter_map(|m| m.get(model))
            .flat_map(|t| t.keys())
            .collect()
    }

    /// All records, ordered by metric, model, then task.
    pub fn records(&self) -> impl Iterator<Item = ScoreRecord> + '_ {
        self.scores.iter().flat_map(|(metric, models)| {
            models.iter().flat_map(move |(model, tasks)| {
                tasks.iter().map(move |(task, value)| ScoreRecord {
                    model_id: model.clone(),
                    task: task.clone(),
                    metric: *metric,
                    value: *value,
                })
            })
        })
    }
}

/// Minimum number of scored tasks for eligibility: `⌊threshold·n⌋`.
///
/// Truncation reproduces the published cutoffs (80% of 3,432 tasks is
/// 2,745.6 and the cutoff is 2,745). A small tolerance absorbs binary
/// rounding of products that are whole numbers in decimal.
pub fn eligibility_cutoff(n_tasks: usize, threshold: f64) -> usize {
    (threshold * n_tasks as f64 + 1e-9).floor() as usize
}

/// Whether each model scored at least the cutoff number of tasks in
/// `task_space`.
pub fn eligibility(
    table: &ScoreTable,
    task_space: &[TaskKey],
    threshold: f64,
) -> Result<BTreeMap<String, bool>, LeaderboardError> {
    if task_space.is_empty() {
        return Err(LeaderboardError::EmptyTaskSpace);
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(LeaderboardError::InvalidThreshold(threshold));
    }
    let space: BTreeSet<&TaskKey> = task_space.iter().collect();
    let cutoff = eligibility_cutoff(space.len(), threshold);
    Ok(table
        .models()
        .into_iter()
        .map(|m| {
            let covered = table
                .scored_tasks(m)
                .into_iter()
                .filter(|t| space.contains(t))
                .count();
            (m.to_string(), covered >= cutoff)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelFilter {
    All,
    Only(BTreeSet<String>),
}

impl ModelFilter {
    fn admits(&self, model: &str) -> bool {
        match self {
            ModelFilter::All => true,
            ModelFilter::Only(set) => set.contains(model),
        }
    }
}

/// Floor applied to shared-task mean scores before forming ratios.
pub const MEAN_SCORE_FLOOR: f64 = 1e-9;

fn shared_means(a: &BTreeMap<TaskKey, f64>, b: &BTreeMap<TaskKey, f64>) -> Option<(f64, f64)> {
    let (small, large, swapped) = if a.len() <= b.len() {
        (a, b, false)
    } else {
        (b, a, true)
    };
    let mut n = 0usize;
    let (mut sum_s, mut sum_l) = (0.0, 0.0);
    for (task, vs) in small {
        if let Some(vl) = large.get(task) {
            n += 1;
            sum_s += vs;
            sum_l += vl;
        }
    }
    if n == 0 {
        return None;
    }
    let (ms, ml) = (sum_s / n as f64, sum_l / n as f64);
    Some(if swapped { (ml, ms) } else { (ms, ml) })
}

fn clamp_mean(model: &str, mean: f64) -> f64 {
    if mean < MEAN_SCORE_FLOOR {
        warn!("model {model}: shared-task mean score {mean} clamped to {MEAN_SCORE_FLOOR}");
        MEAN_SCORE_FLOOR
    } else {
        mean
    }
}

/// Pairwise relative skill of each admitted model, rescaled so `baseline`
/// scores exactly one.
///
/// For each pair the ratio of mean scores is taken over the tasks both
/// models scored; a model's skill is the geometric mean of its ratios
/// against every admitted model, itself included. Models sharing no task
/// with the baseline map to `None`.
pub fn pairwise_relative(
    table: &ScoreTable,
    metric: Metric,
    baseline: &str,
    filter: &ModelFilter,
) -> Result<BTreeMap<String, Option<f64>>, LeaderboardError> {
    pairwise_relative_with(Execution::default(), table, metric, baseline, filter)
}

pub fn pairwise_relative_with(
    exec: Execution,
    table: &ScoreTable,
    metric: Metric,
    baseline: &str,
    filter: &ModelFilter,
) -> Result<BTreeMap<String, Option<f64>>, LeaderboardError> {
    let by_model = table
        .metric_scores(metric)
        .ok_or_else(|| LeaderboardError::MissingBaseline(baseline.to_string()))?;
    if !by_model.contains_key(baseline) {
        return Err(LeaderboardError::MissingBaseline(baseline.to_string()));
    }
    let models: Vec<(&String, &BTreeMap<TaskKey, f64>)> = by_model
        .iter()
        .filter(|(m, _)| m.as_str() == baseline || filter.admits(m))
        .collect();

    // θ_i: geometric mean of shared-task mean ratios over all models,
    // the self-comparison (ratio 1) included.
    let thetas: Vec<Option<f64>> = exec.map(&models, |(mi, si)| {
        let mut log_sum = 0.0;
        let mut count = 1usize;
        for (mj, sj) in &models {
            if mi == mj {
                continue;
            }
            if let Some((a, b)) = shared_means(si, sj) {
                log_sum += (clamp_mean(mi, a) / clamp_mean(mj, b)).ln();
                count += 1;
            }
        }
        Some((log_sum / count as f64).exp())
    });

    let base_idx = models
        .iter()
        .position(|(m, _)| m.as_str() == baseline)
        .expect("baseline retained by filter");
    let base_scores = models[base_idx].1;
    let theta_base = thetas[base_idx];

    Ok(models
        .iter()
        .zip(&thetas)
        .map(|((m, scores), theta)| {
            let rel = if m.as_str() == baseline {
                Some(1.0)
            } else if shared_means(scores, base_scores).is_none() {
                None
            } else {
                match (theta, theta_base) {
                    (Some(t), Some(tb)) => Some(t / tb),
                    _ => None,
                }
            };
            ((*m).clone(), rel)
        })
        .collect())
}

/// Per-task ranks rescaled to `[0,1]`, 1 for the lowest score. Tied models
/// share the mean of their positions' values. Tasks scored by a single
/// model are omitted.
pub fn standardized_ranks(table: &ScoreTable, metric: Metric) -> BTreeMap<(String, TaskKey), f64> {
    let mut by_task: BTreeMap<&TaskKey, Vec<(&str, f64)>> = BTreeMap::new();
    if let Some(models) = table.metric_scores(metric) {
        for (model, tasks) in models {
            for (task, &v) in tasks {
                by_task.entry(task).or_default().push((model, v));
            }
        }
    }
    let mut out = BTreeMap::new();
    for (task, mut entries) in by_task {
        let n = entries.len();
        if n < 2 {
            continue;
        }
        entries.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
        let value_at = |pos: usize| 1.0 - pos as f64 / (n - 1) as f64;
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && entries[end].1 == entries[start].1 {
                end += 1;
            }
            let shared = (start..end).map(value_at).sum::<f64>() / (end - start) as f64;
            for (model, _) in &entries[start..end] {
                out.insert((model.to_string(), task.clone()), shared);
            }
            start = end;
        }
    }
    out
}

/// Mean score per model and horizon; horizons a model never scored are absent.
pub fn horizon_breakdown(table: &ScoreTable, metric: Metric) -> BTreeMap<(String, Horizon), f64> {
    let mut acc: BTreeMap<(String, Horizon), (f64, usize)> = BTreeMap::new();
    if let Some(models) = table.metric_scores(metric) {
        for (model, tasks) in models {
            for (task, v) in tasks {
                let e = acc.entry((model.clone(), task.horizon)).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

/// `(n_tasks, mean)` per model under `metric`.
pub fn mean_scores(table: &ScoreTable, metric: Metric) -> BTreeMap<String, (usize, f64)> {
    table
        .metric_scores(metric)
        .map(|models| {
            models
                .iter()
                .map(|(m, tasks)| {
                    let n = tasks.len();
                    (m.clone(), (n, tasks.values().sum::<f64>() / n as f64))
                })
                .collect()
        })
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub model_id: String,
    pub n_tasks: usize,
    pub mean_score: f64,
    pub pairwise_relative: Option<f64>,
    pub eligible: bool,
}

/// Full leaderboard: relative skill is computed among eligible models (plus
/// the baseline). Rows are ordered by relative score, undefined last, then
/// by model id.
pub fn leaderboard(
    table: &ScoreTable,
    task_space: &[TaskKey],
    metric: Metric,
    baseline: &str,
    threshold: f64,
) -> Result<Vec<LeaderboardRow>, LeaderboardError> {
    let eligible = eligibility(table, task_space, threshold)?;
    let admitted: BTreeSet<String> = eligible
        .iter()
        .filter(|(_, &ok)| ok)
        .map(|(m, _)| m.clone())
        .collect();
    let relative = pairwise_relative(table, metric, baseline, &ModelFilter::Only(admitted))?;
    let means = mean_scores(table, metric);
    let mut rows: Vec<LeaderboardRow> = means
        .into_iter()
        .map(|(model_id, (n_tasks, mean_score))| {
            let is_eligible = eligible.get(&model_id).copied().unwrap_or(false);
            LeaderboardRow {
                pairwise_relative: if is_eligible || model_id == baseline {
                    relative.get(&model_id).copied().flatten()
                } else {
                    None
                },
                eligible: is_eligible,
                model_id,
                n_tasks,
                mean_score,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &LeaderboardRow| r.pairwise_relative.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then_with(|| a.model_id.cmp(&b.model_id))
    });
    Ok(rows)
}
