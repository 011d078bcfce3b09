//! Proper scoring rules for quantile and sample forecasts.
//!
//! Quantile scores assume the canonical 23-level layout unless a custom
//! [`QuantileLevels`] is passed to [`weighted_interval_score`]. Sample scores
//! work on any vector of at least two finite draws.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{
    check_monotone, ModelError, QuantileLevels, TaskKey, MEDIAN_INDEX, N_INTERVALS, N_QUANTILES,
};
use crate::stats::sorted_quantile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("inverted interval: lower {lower} > upper {upper}")]
    InvertedInterval { lower: f64, upper: f64 },
    #[error("alpha {0} outside (0,1)")]
    InvalidAlpha(f64),
    #[error("quantile crossing at level index {index}")]
    QuantileCrossing { index: usize },
    #[error("expected {N_QUANTILES} quantile values, got {0}")]
    WrongQuantileCount(usize),
    #[error("negative count {0}")]
    NegativeCount(f64),
    #[error("non-finite input")]
    NonFinite,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

impl From<ModelError> for ScoreError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::QuantileCrossing { index } => ScoreError::QuantileCrossing { index },
            ModelError::WrongQuantileCount(n) => ScoreError::WrongQuantileCount(n),
            _ => ScoreError::NonFinite,
        }
    }
}

/// Metrics that can appear in a score table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Wis,
    LogWis,
    Crps,
    LogCrps,
    LogScore,
    Mae,
    Bias,
    Ci50Width,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Wis,
        Metric::LogWis,
        Metric::Crps,
        Metric::LogCrps,
        Metric::LogScore,
        Metric::Mae,
        Metric::Bias,
        Metric::Ci50Width,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Wis => "wis",
            Metric::LogWis => "logwis",
            Metric::Crps => "crps",
            Metric::LogCrps => "logcrps",
            Metric::LogScore => "logscore",
            Metric::Mae => "mae",
            Metric::Bias => "bias",
            Metric::Ci50Width => "ci50_width",
        }
    }

    /// Whether lower values are better and the metric is bounded below by
    /// zero, which makes it usable for relative skill and search rewards.
    pub fn is_nonnegative_loss(self) -> bool {
        matches!(
            self,
            Metric::Wis | Metric::LogWis | Metric::Crps | Metric::LogCrps | Metric::Mae
        )
    }

    /// Decimal places used when the metric is written to a report.
    pub fn report_decimals(self) -> usize {
        match self {
            Metric::Wis | Metric::Mae | Metric::Bias | Metric::Ci50Width => 2,
            _ => 4,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "");
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().replace('_', "") == norm)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// One score for one model on one task.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub model_id: String,
    pub task: TaskKey,
    pub metric: Metric,
    pub value: f64,
}

/// Interval score of the central `(1−alpha)` interval `[lower, upper]`.
pub fn interval_score(lower: f64, upper: f64, alpha: f64, y: f64) -> Result<f64, ScoreError> {
    if !(lower.is_finite() && upper.is_finite() && y.is_finite()) {
        return Err(ScoreError::NonFinite);
    }
    if lower > upper {
        return Err(ScoreError::InvertedInterval { lower, upper });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScoreError::InvalidAlpha(alpha));
    }
    Ok(interval_score_unchecked(lower, upper, alpha, y))
}

fn interval_score_unchecked(lower: f64, upper: f64, alpha: f64, y: f64) -> f64 {
    let mut s = upper - lower;
    if y < lower {
        s += 2.0 / alpha * (lower - y);
    }
    if y > upper {
        s += 2.0 / alpha * (y - upper);
    }
    s
}

/// WIS against an arbitrary symmetric 23-level set.
pub fn weighted_interval_score(
    levels: &QuantileLevels,
    values: &[f64],
    y: f64,
) -> Result<f64, ScoreError> {
    if values.len() != N_QUANTILES {
        return Err(ScoreError::WrongQuantileCount(values.len()));
    }
    if !y.is_finite() {
        return Err(ScoreError::NonFinite);
    }
    check_monotone(values)?;
    let alphas = levels.alphas();
    let mut total = 0.5 * (y - values[MEDIAN_INDEX]).abs();
    for (k, &alpha) in alphas.iter().enumerate() {
        let lower = values[k];
        let upper = values[N_QUANTILES - 1 - k];
        total += alpha / 2.0 * interval_score_unchecked(lower, upper, alpha, y);
    }
    Ok(total / (N_INTERVALS as f64 + 0.5))
}

/// Weighted interval score on the canonical hub levels.
pub fn wis(values: &[f64], y: f64) -> Result<f64, ScoreError> {
    weighted_interval_score(&QuantileLevels::canonical(), values, y)
}

fn log1p_counts(values: &[f64]) -> Result<Vec<f64>, ScoreError> {
    values
        .iter()
        .map(|&v| {
            if v < 0.0 {
                Err(ScoreError::NegativeCount(v))
            } else {
                Ok(v.ln_1p())
            }
        })
        .collect()
}

fn log1p_count(y: f64) -> Result<f64, ScoreError> {
    if y < 0.0 {
        Err(ScoreError::NegativeCount(y))
    } else {
        Ok(y.ln_1p())
    }
}

/// WIS on the `log(1+x)` scale.
pub fn log_wis(values: &[f64], y: f64) -> Result<f64, ScoreError> {
    let transformed = log1p_counts(values)?;
    wis(&transformed, log1p_count(y)?)
}

fn check_samples(samples: &[f64], y: f64) -> Result<(), ScoreError> {
    if samples.len() < 2 {
        return Err(ScoreError::TooFewSamples(samples.len()));
    }
    if !y.is_finite() || samples.iter().any(|s| !s.is_finite()) {
        return Err(ScoreError::NonFinite);
    }
    Ok(())
}

/// Sample CRPS, `mean|X−y| − (1/2N²) ΣΣ|Xi−Xj|`.
///
/// The double sum is evaluated in `O(N log N)` from the order statistics.
pub fn crps_samples(samples: &[f64], y: f64) -> Result<f64, ScoreError> {
    check_samples(samples, y)?;
    let n = samples.len() as f64;
    let abs_err = samples.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    // ΣΣ|xi − xj| = 2 Σ_i (2i − n + 1) x_(i)
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - n + 1.0) * x)
        .sum();
    let spread = 2.0 * weighted / (2.0 * n * n);
    Ok((abs_err - spread).max(0.0))
}

/// Sample CRPS after `log(1+x)` on draws and truth.
pub fn log_crps_samples(samples: &[f64], y: f64) -> Result<f64, ScoreError> {
    let transformed = log1p_counts(samples)?;
    crps_samples(&transformed, log1p_count(y)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `0.9 · min(sd, IQR/1.34) · n^(−1/5)`.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScoreOptions {
    pub bandwidth: Bandwidth,
    /// Upper bound on the returned score.
    pub cap: f64,
}

impl Default for LogScoreOptions {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            cap: 500.0,
        }
    }
}

const MIN_BANDWIDTH: f64 = 1e-6;

fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * n.powf(-0.2)).max(MIN_BANDWIDTH)
}

/// Negative log of a Gaussian kernel density estimate at `y`, capped at
/// `options.cap`.
pub fn log_score_samples(
    samples: &[f64],
    y: f64,
    options: LogScoreOptions,
) -> Result<f64, ScoreError> {
    check_samples(samples, y)?;
    let h = match options.bandwidth {
        Bandwidth::Silverman => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            silverman_bandwidth(&sorted)
        }
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(_) => return Err(ScoreError::NonFinite),
    };
    // log f(y) = logsumexp(−z²/2) − log(n·h·√(2π)), computed without underflow.
    let exps: Vec<f64> = samples
        .iter()
        .map(|x| -0.5 * ((y - x) / h).powi(2))
        .collect();
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
    let n = samples.len() as f64;
    let log_density = lse - (n * h * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let score = -log_density;
    Ok(if score.is_finite() {
        score.min(options.cap)
    } else {
        options.cap
    })
}

/// Point-forecast diagnostics derived from a quantile forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastQuality {
    pub bias: f64,
    pub under: bool,
    pub over: bool,
    pub ci50_width: f64,
    pub abs_err: f64,
}

const Q25_INDEX: usize = 6;
const Q75_INDEX: usize = 16;

pub fn forecast_quality(values: &[f64], y: f64) -> Result<ForecastQuality, ScoreError> {
    if values.len() != N_QUANTILES {
        return Err(ScoreError::WrongQuantileCount(values.len()));
    }
    check_monotone(values)?;
    let m = values[MEDIAN_INDEX];
    Ok(ForecastQuality {
        bias: m - y,
        under: m < y,
        over: m > y,
        ci50_width: values[Q75_INDEX] - values[Q25_INDEX],
        abs_err: (m - y).abs(),
    })
}

/// Deterministic draws from the piecewise-linear quantile function through
/// the 23 levels, taken at probabilities `(i + 0.5)/n`. Probabilities beyond
/// the outermost levels map to the outermost quantiles.
pub fn quantile_samples(values: &[f64], n: usize) -> Vec<f64> {
    let levels = QuantileLevels::canonical();
    let lv = levels.as_slice();
    (0..n)
        .map(|i| {
            let p = (i as f64 + 0.5) / n as f64;
            if p <= lv[0] {
                return values[0];
            }
            if p >= lv[N_QUANTILES - 1] {
                return values[N_QUANTILES - 1];
            }
            let k = lv.partition_point(|&l| l <= p) - 1;
            let t = (p - lv[k]) / (lv[k + 1] - lv[k]);
            values[k] + t * (values[k + 1] - values[k])
        })
        .collect()
}

/// Draw count used when a sample metric is requested for a quantile forecast.
pub const QUANTILE_SAMPLE_SIZE: usize = 1000;

/// Scores a quantile forecast under any metric. Sample-based metrics use
/// [`quantile_samples`] with [`QUANTILE_SAMPLE_SIZE`] draws.
pub fn score_quantiles(metric: Metric, values: &[f64], y: f64) -> Result<f64, ScoreError> {
    match metric {
        Metric::Wis => wis(values, y),
        Metric::LogWis => log_wis(values, y),
        Metric::Crps | Metric::LogCrps | Metric::LogScore => {
            if values.len() != N_QUANTILES {
                return Err(ScoreError::WrongQuantileCount(values.len()));
            }
            check_monotone(values)?;
            score_samples(metric, &quantile_samples(values, QUANTILE_SAMPLE_SIZE), y)
        }
        Metric::Mae => Ok(forecast_quality(values, y)?.abs_err),
        Metric::Bias => Ok(forecast_quality(values, y)?.bias),
        Metric::Ci50Width => Ok(forecast_quality(values, y)?.ci50_width),
    }
}

/// Scores a sample forecast. Quantile-only metrics are evaluated on the
/// empirical 23 quantiles of the draws.
pub fn score_samples(metric: Metric, samples: &[f64], y: f64) -> Result<f64, ScoreError> {
    match metric {
        Metric::Crps => crps_samples(samples, y),
        Metric::LogCrps => log_crps_samples(samples, y),
        Metric::LogScore => log_score_samples(samples, y, LogScoreOptions::default()),
        _ => {
            check_samples(samples, y)?;
            let mut sorted = samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            let q: Vec<f64> = QuantileLevels::canonical()
                .as_slice()
                .iter()
                .map(|&p| sorted_quantile(&sorted, p))
                .collect();
            score_quantiles(metric, &q, y)
        }
    }
}
