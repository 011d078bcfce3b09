//! Flat-line persistence baseline.
//!
//! The median is the last observation. Spread comes from the distribution of
//! sums of `k` draws from the symmetrized one-week differences, where `k` is
//! the number of weeks between the last observation and the target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_param, task_seed, unknown_key, ForecastError, ForecasterKind};
use crate::model::{
    Dataset, ObservationPoint, QuantileForecast, TaskKey, CANONICAL_LEVELS, MEDIAN_INDEX,
    N_QUANTILES,
};
use crate::stats::sorted_quantile;

/// Above this many combinations the step-sum distribution is sampled.
const EXACT_LIMIT: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FlatLineParams {
    /// Most recent one-week differences to use; `None` uses all of them.
    pub history_diffs: Option<usize>,
    /// Monte Carlo draws when exact enumeration is too large.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for FlatLineParams {
    fn default() -> Self {
        Self {
            history_diffs: None,
            n_samples: 10_000,
            seed: 0,
        }
    }
}

impl FlatLineParams {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.history_diffs == Some(0) {
            return Err(ForecastError::InvalidConfig(
                "history_diffs must be ≥ 1".into(),
            ));
        }
        if self.n_samples < 2 {
            return Err(ForecastError::InvalidConfig("n_samples must be ≥ 2".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            (
                "history_diffs",
                self.history_diffs
                    .map_or_else(|| "all".to_string(), |n| n.to_string()),
            ),
            ("n_samples", self.n_samples.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ForecastError> {
        match key {
            "history_diffs" => {
                self.history_diffs = if value.trim().eq_ignore_ascii_case("all") {
                    None
                } else {
                    Some(parse_param(key, value)?)
                }
            }
            "n_samples" => self.n_samples = parse_param(key, value)?,
            "seed" => self.seed = parse_param(key, value)?,
            _ => return Err(unknown_key(key, ForecasterKind::FlatLine)),
        }
        Ok(())
    }
}

pub fn forecast_task(
    data: &Dataset,
    task: &TaskKey,
    params: &FlatLineParams,
) -> Result<QuantileForecast, ForecastError> {
    let series = data
        .series(&task.location)
        .ok_or_else(|| ForecastError::InsufficientHistory(task.location.clone()))?;
    flatline_forecast(series.up_to(task.reference_date), task, params)
}

/// Flat-line forecast from the observations visible at the reference date.
pub fn flatline_forecast(
    history: &[ObservationPoint],
    task: &TaskKey,
    params: &FlatLineParams,
) -> Result<QuantileForecast, ForecastError> {
    let history: Vec<&ObservationPoint> = history
        .iter()
        .filter(|p| p.date <= task.reference_date)
        .collect();
    if history.len() < 2 {
        return Err(ForecastError::InsufficientHistory(task.location.clone()));
    }
    let last = history[history.len() - 1];
    let mut diffs: Vec<f64> = history.windows(2).map(|w| w[1].value - w[0].value).collect();
    if let Some(n) = params.history_diffs {
        let skip = diffs.len().saturating_sub(n);
        diffs.drain(..skip);
    }
    let pool: Vec<f64> = diffs.iter().flat_map(|&d| [d, -d]).collect();

    let steps = steps_ahead(last.date, task);
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed(params.seed, task));
    let mut offsets = [0.0f64; N_QUANTILES];
    for k in 1..=steps {
        let sums = step_sums(&pool, k, params.n_samples, &mut rng);
        let q: Vec<f64> = CANONICAL_LEVELS
            .iter()
            .map(|&p| sorted_quantile(&sums, p))
            .collect();
        // Symmetrize, then never let a level narrow as k grows.
        for j in MEDIAN_INDEX + 1..N_QUANTILES {
            let half = 0.5 * (q[j] - q[N_QUANTILES - 1 - j]);
            offsets[j] = offsets[j].max(half);
            offsets[N_QUANTILES - 1 - j] = -offsets[j];
        }
    }
    let values: Vec<f64> = offsets.iter().map(|o| (last.value + o).max(0.0)).collect();
    Ok(QuantileForecast::new(task.clone(), &values)?)
}

/// Weeks from the last observation to the target, at least one.
pub(crate) fn steps_ahead(last: chrono::NaiveDate, task: &TaskKey) -> usize {
    let days = (task.target_end_date() - last).num_days();
    (days.div_euclid(7)).max(1) as usize
}

/// Sorted sums of `k` draws with replacement from `pool`: every combination
/// when that is small enough, otherwise `n_samples` random ones.
fn step_sums(pool: &[f64], k: usize, n_samples: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let exact = pool
        .len()
        .checked_pow(k as u32)
        .is_some_and(|n| n <= EXACT_LIMIT);
    let mut sums = if exact {
        let mut acc = vec![0.0];
        for _ in 0..k {
            acc = acc
                .iter()
                .flat_map(|&a| pool.iter().map(move |&d| a + d))
                .collect();
        }
        acc
    } else {
        (0..n_samples)
            .map(|_| (0..k).map(|_| pool[rng.random_range(0..pool.len())]).sum())
            .collect()
    };
    sums.sort_by(f64::total_cmp);
    sums
}
