//! Climatological window model.
//!
//! Quantiles come from historical values whose MMWR week lies near the
//! target week, once for the target location alone and once pooled over all
//! locations as rates per 100,000, then averaged.

use chrono::NaiveDate;

use super::{parse_param, unknown_key, ForecastError, ForecasterKind};
use crate::model::{epiweek, Dataset, QuantileForecast, TaskKey, CANONICAL_LEVELS, N_QUANTILES};
use crate::stats::sorted_quantile;

pub const RATE_SCALE: f64 = 100_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClimatologyParams {
    /// Weeks either side of the target week; the window is `2h+1` wide.
    pub window_halfwidth: u32,
    /// Minimum pooled sample size for a component to be used.
    pub min_samples: usize,
    /// Shrinkage toward zero in `[0, 1]`.
    pub smoothing: f64,
    /// Ignore history before this date.
    pub start_date: Option<NaiveDate>,
}

impl Default for ClimatologyParams {
    fn default() -> Self {
        Self {
            window_halfwidth: 3,
            min_samples: 3,
            smoothing: 0.0,
            start_date: None,
        }
    }
}

impl ClimatologyParams {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if !(0.0..=1.0).contains(&self.smoothing) {
            return Err(ForecastError::InvalidConfig(format!(
                "smoothing {} outside [0, 1]",
                self.smoothing
            )));
        }
        if self.window_halfwidth > 26 {
            return Err(ForecastError::InvalidConfig(
                "window_halfwidth must be ≤ 26".into(),
            ));
        }
        if self.min_samples == 0 {
            return Err(ForecastError::InvalidConfig("min_samples must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("window_halfwidth", self.window_halfwidth.to_string()),
            ("min_samples", self.min_samples.to_string()),
            ("smoothing", self.smoothing.to_string()),
            (
                "start_date",
                self.start_date
                    .map_or_else(|| "all".to_string(), |d| d.to_string()),
            ),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ForecastError> {
        match key {
            "window_halfwidth" => self.window_halfwidth = parse_param(key, value)?,
            "min_samples" => self.min_samples = parse_param(key, value)?,
            "smoothing" => self.smoothing = parse_param(key, value)?,
            "start_date" => {
                self.start_date = if value.trim().eq_ignore_ascii_case("all") {
                    None
                } else {
                    Some(parse_param(key, value)?)
                }
            }
            _ => return Err(unknown_key(key, ForecasterKind::Climatological)),
        }
        Ok(())
    }
}

/// Circular distance between MMWR week numbers on a 52-week cycle.
pub fn week_distance(a: u32, b: u32) -> u32 {
    let d = (a as i64 - b as i64).rem_euclid(52) as u32;
    d.min(52 - d)
}

fn in_window(date: NaiveDate, target_week: u32, task: &TaskKey, p: &ClimatologyParams) -> bool {
    date <= task.reference_date
        && p.start_date.is_none_or(|s| date >= s)
        && week_distance(epiweek(date).1, target_week) <= p.window_halfwidth
}

fn quantiles(mut pool: Vec<f64>) -> Vec<f64> {
    pool.sort_by(f64::total_cmp);
    CANONICAL_LEVELS
        .iter()
        .map(|&p| sorted_quantile(&pool, p))
        .collect()
}

pub fn forecast_task(
    data: &Dataset,
    task: &TaskKey,
    p: &ClimatologyParams,
) -> Result<QuantileForecast, ForecastError> {
    let location = data
        .locations
        .get(&task.location)
        .ok_or_else(|| ForecastError::UnknownLocation(task.location.clone()))?;
    let target_week = epiweek(task.target_end_date()).1;

    let local: Vec<f64> = data
        .series(&task.location)
        .map(|s| {
            s.points()
                .iter()
                .filter(|pt| in_window(pt.date, target_week, task, p))
                .map(|pt| pt.value)
                .collect()
        })
        .unwrap_or_default();

    let mut rates = Vec::new();
    for (code, s) in &data.series {
        let Some(loc) = data.locations.get(code) else {
            continue;
        };
        rates.extend(
            s.points()
                .iter()
                .filter(|pt| in_window(pt.date, target_week, task, p))
                .map(|pt| pt.value / loc.population as f64 * RATE_SCALE),
        );
    }

    let specific = (local.len() >= p.min_samples).then(|| quantiles(local));
    let aggregated = (rates.len() >= p.min_samples).then(|| {
        quantiles(rates)
            .into_iter()
            .map(|r| r * location.population as f64 / RATE_SCALE)
            .collect::<Vec<f64>>()
    });

    let combined: Vec<f64> = match (specific, aggregated) {
        (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect(),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => {
            log::warn!("{task}: no climatological samples in window, emitting zeros");
            vec![0.0; N_QUANTILES]
        }
    };
    let shrunk: Vec<f64> = combined
        .iter()
        .map(|v| (v * (1.0 - p.smoothing)).max(0.0))
        .collect();
    let values = crate::ensemble::repair_monotone(&shrunk);
    Ok(QuantileForecast::new(task.clone(), &values)?)
}
