//! Reference forecasters: flat-line persistence, a climatological window
//! model and a pooled fourth-root AR(6).

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

use crate::model::{Dataset, ModelError, QuantileForecast, TaskKey};
use crate::stats::fnv1a;

pub mod ar6;
pub mod climatology;
pub mod flatline;

pub use ar6::{Ar6Fit, Ar6Params};
pub use climatology::ClimatologyParams;
pub use flatline::FlatLineParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("location {0}: need ≥2 observations")]
    InsufficientHistory(String),
    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),
    #[error("unknown location {0}")]
    UnknownLocation(String),
    #[error("invalid forecaster config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Produces quantile forecasts for a batch of tasks from the data in hand.
///
/// Implementations must only look at observations dated on or before each
/// task's reference date.
pub trait Forecaster: Sync {
    fn forecast(
        &self,
        data: &Dataset,
        tasks: &[TaskKey],
    ) -> Result<Vec<QuantileForecast>, ForecastError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ForecasterKind {
    FlatLine,
    Climatological,
    Ar6Pooled,
}

impl ForecasterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ForecasterKind::FlatLine => "flatline",
            ForecasterKind::Climatological => "climatological",
            ForecasterKind::Ar6Pooled => "ar6_pooled",
        }
    }
}

impl fmt::Display for ForecasterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ForecasterKind {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "flatline" | "flat_line" => Ok(ForecasterKind::FlatLine),
            "climatological" | "climatology" => Ok(ForecasterKind::Climatological),
            "ar6_pooled" | "ar6" => Ok(ForecasterKind::Ar6Pooled),
            other => Err(ForecastError::InvalidConfig(format!(
                "unknown forecaster kind '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForecasterConfig {
    FlatLine(FlatLineParams),
    Climatological(ClimatologyParams),
    Ar6Pooled(Ar6Params),
}

impl ForecasterConfig {
    pub fn default_for(kind: ForecasterKind) -> Self {
        match kind {
            ForecasterKind::FlatLine => ForecasterConfig::FlatLine(FlatLineParams::default()),
            ForecasterKind::Climatological => {
                ForecasterConfig::Climatological(ClimatologyParams::default())
            }
            ForecasterKind::Ar6Pooled => ForecasterConfig::Ar6Pooled(Ar6Params::default()),
        }
    }

    pub fn kind(&self) -> ForecasterKind {
        match self {
            ForecasterConfig::FlatLine(_) => ForecasterKind::FlatLine,
            ForecasterConfig::Climatological(_) => ForecasterKind::Climatological,
            ForecasterConfig::Ar6Pooled(_) => ForecasterKind::Ar6Pooled,
        }
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        match self {
            ForecasterConfig::FlatLine(p) => p.validate(),
            ForecasterConfig::Climatological(p) => p.validate(),
            ForecasterConfig::Ar6Pooled(p) => p.validate(),
        }
    }

    /// Flat key/value view, `kind` first and then the parameters by name.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![("kind".to_string(), self.kind().to_string())];
        let params = match self {
            ForecasterConfig::FlatLine(p) => p.to_pairs(),
            ForecasterConfig::Climatological(p) => p.to_pairs(),
            ForecasterConfig::Ar6Pooled(p) => p.to_pairs(),
        };
        out.extend(params.into_iter().map(|(k, v)| (k.to_string(), v)));
        out
    }

    /// Inverse of [`to_pairs`](Self::to_pairs). Missing keys take defaults;
    /// unknown keys are rejected.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ForecastError> {
        let kind: ForecasterKind = pairs
            .get("kind")
            .ok_or_else(|| ForecastError::InvalidConfig("missing key 'kind'".into()))?
            .parse()?;
        let mut cfg = Self::default_for(kind);
        for (k, v) in pairs {
            if k == "kind" {
                continue;
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one parameter from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ForecastError> {
        match self {
            ForecasterConfig::FlatLine(p) => p.set(key, value),
            ForecasterConfig::Climatological(p) => p.set(key, value),
            ForecasterConfig::Ar6Pooled(p) => p.set(key, value),
        }
    }
}

impl fmt::Display for ForecasterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

impl Forecaster for ForecasterConfig {
    fn forecast(
        &self,
        data: &Dataset,
        tasks: &[TaskKey],
    ) -> Result<Vec<QuantileForecast>, ForecastError> {
        self.validate()?;
        // Each reference date sees only its own past.
        let mut by_date: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
        for (i, t) in tasks.iter().enumerate() {
            by_date.entry(t.reference_date).or_default().push(i);
        }
        let mut out: Vec<Option<QuantileForecast>> = vec![None; tasks.len()];
        for (date, idx) in by_date {
            let visible = data.truncated(date);
            let batch: Vec<TaskKey> = idx.iter().map(|&i| tasks[i].clone()).collect();
            let forecasts = match self {
                ForecasterConfig::FlatLine(p) => batch
                    .iter()
                    .map(|t| flatline::forecast_task(&visible, t, p))
                    .collect::<Result<Vec<_>, _>>()?,
                ForecasterConfig::Climatological(p) => batch
                    .iter()
                    .map(|t| climatology::forecast_task(&visible, t, p))
                    .collect::<Result<Vec<_>, _>>()?,
                ForecasterConfig::Ar6Pooled(p) => {
                    let fit = ar6::fit(&visible, p)?;
                    batch
                        .iter()
                        .map(|t| ar6::forecast_task(&fit, &visible, t, p))
                        .collect::<Result<Vec<_>, _>>()?
                }
            };
            for (i, f) in idx.into_iter().zip(forecasts) {
                out[i] = Some(f);
            }
        }
        Ok(out.into_iter().map(|f| f.expect("every task forecast")).collect())
    }
}

/// Seed for a task-specific RNG stream.
pub(crate) fn task_seed(seed: u64, task: &TaskKey) -> u64 {
    seed ^ fnv1a(task.to_string().as_bytes())
}

pub(crate) fn parse_param<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ForecastError> {
    value
        .trim()
        .parse()
        .map_err(|_| ForecastError::InvalidConfig(format!("bad value '{value}' for {key}")))
}

pub(crate) fn unknown_key(key: &str, kind: ForecasterKind) -> ForecastError {
    ForecastError::InvalidConfig(format!("unknown key '{key}' for {kind}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_round_trip_for_every_kind() {
        for kind in [
            ForecasterKind::FlatLine,
            ForecasterKind::Climatological,
            ForecasterKind::Ar6Pooled,
        ] {
            let cfg = ForecasterConfig::default_for(kind);
            let map: BTreeMap<String, String> = cfg.to_pairs().into_iter().collect();
            assert_eq!(ForecasterConfig::from_pairs(&map).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_key_and_bad_kind_rejected() {
        let mut map = BTreeMap::new();
        map.insert("kind".to_string(), "flatline".to_string());
        map.insert("window".to_string(), "3".to_string());
        assert!(ForecasterConfig::from_pairs(&map).is_err());
        map.clear();
        map.insert("kind".to_string(), "lstm".to_string());
        assert!(ForecasterConfig::from_pairs(&map).is_err());
    }
}
