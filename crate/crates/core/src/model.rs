//! Domain types shared across the crate: locations, forecasting tasks,
//! quantile and sample forecasts, and weekly observation series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, Duration, NaiveDate};
use thiserror::Error;

/// Number of quantile levels in a hub forecast.
pub const N_QUANTILES: usize = 23;

/// Number of central prediction intervals encoded by the quantile levels.
pub const N_INTERVALS: usize = 11;

/// Index of the median within [`CANONICAL_LEVELS`].
pub const MEDIAN_INDEX: usize = 11;

/// The hub quantile levels, in ascending order.
pub const CANONICAL_LEVELS: [f64; N_QUANTILES] = [
    0.01, 0.025, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65,
    0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.975, 0.99,
];

/// Decimal spellings of [`CANONICAL_LEVELS`] as written in submission files.
pub const CANONICAL_LEVEL_LITERALS: [&str; N_QUANTILES] = [
    "0.01", "0.025", "0.05", "0.1", "0.15", "0.2", "0.25", "0.3", "0.35", "0.4", "0.45", "0.5",
    "0.55", "0.6", "0.65", "0.7", "0.75", "0.8", "0.85", "0.9", "0.95", "0.975", "0.99",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty task-space axis: {0}")]
    EmptyAxis(&'static str),
    #[error("horizon {0} outside 0..=3")]
    InvalidHorizon(i64),
    #[error("location {code}: population must be positive")]
    NonPositivePopulation { code: String },
    #[error("duplicate location code {0}")]
    DuplicateLocation(String),
    #[error("expected {N_QUANTILES} quantile values, got {0}")]
    WrongQuantileCount(usize),
    #[error("quantile levels invalid: {0}")]
    InvalidLevels(&'static str),
    #[error("quantile crossing at level index {index}")]
    QuantileCrossing { index: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("negative count {value} at index {index}")]
    NegativeCount { index: usize, value: f64 },
    #[error("sample forecast needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("series {location}: {reason}")]
    InvalidSeries { location: String, reason: String },
}

/// A forecast jurisdiction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub code: String,
    pub name: String,
    pub population: u64,
}

impl Location {
    pub fn new(
        code: impl Into<String>,
        name: impl Into<String>,
        population: u64,
    ) -> Result<Self, ModelError> {
        let code = code.into();
        if population == 0 {
            return Err(ModelError::NonPositivePopulation { code });
        }
        Ok(Self {
            code,
            name: name.into(),
            population,
        })
    }
}

/// Locations keyed by code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocationTable {
    by_code: BTreeMap<String, Location>,
}

impl LocationTable {
    pub fn new(locations: impl IntoIterator<Item = Location>) -> Result<Self, ModelError> {
        let mut by_code = BTreeMap::new();
        for loc in locations {
            if by_code.contains_key(&loc.code) {
                return Err(ModelError::DuplicateLocation(loc.code));
            }
            by_code.insert(loc.code.clone(), loc);
        }
        Ok(Self { by_code })
    }

    pub fn get(&self, code: &str) -> Option<&Location> {
        self.by_code.get(code)
    }

    pub fn contains(&self, code: &str) -> bool {
        self.by_code.contains_key(code)
    }

    /// Locations in code order.
    pub fn iter(&self) -> impl Iterator<Item = &Location> {
        self.by_code.values()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.by_code.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_code.is_empty()
    }
}

/// Weeks ahead of the reference date, 0 through 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Horizon(u8);

impl Horizon {
    pub const MAX: u8 = 3;

    pub fn new(weeks: i64) -> Result<Self, ModelError> {
        if (0..=Self::MAX as i64).contains(&weeks) {
            Ok(Self(weeks as u8))
        } else {
            Err(ModelError::InvalidHorizon(weeks))
        }
    }

    pub fn all() -> [Horizon; 4] {
        [Horizon(0), Horizon(1), Horizon(2), Horizon(3)]
    }

    pub fn weeks(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One forecasting task. Ordering is lexicographic on
/// (reference date, location code, horizon).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskKey {
    pub reference_date: NaiveDate,
    pub location: String,
    pub horizon: Horizon,
}

impl TaskKey {
    pub fn new(reference_date: NaiveDate, location: impl Into<String>, horizon: Horizon) -> Self {
        Self {
            reference_date,
            location: location.into(),
            horizon,
        }
    }

    pub fn target_end_date(&self) -> NaiveDate {
        self.reference_date + Duration::weeks(self.horizon.0 as i64)
    }
}

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/h{}",
            self.reference_date, self.location, self.horizon
        )
    }
}

/// Cartesian product of the three task axes, deduplicated and sorted.
pub fn build_task_space(
    reference_dates: &[NaiveDate],
    locations: &[String],
    horizons: &[Horizon],
) -> Result<Vec<TaskKey>, ModelError> {
    if reference_dates.is_empty() {
        return Err(ModelError::EmptyAxis("reference dates"));
    }
    if locations.is_empty() {
        return Err(ModelError::EmptyAxis("locations"));
    }
    if horizons.is_empty() {
        return Err(ModelError::EmptyAxis("horizons"));
    }
    let dates: BTreeSet<_> = reference_dates.iter().copied().collect();
    let locs: BTreeSet<_> = locations.iter().collect();
    let hs: BTreeSet<_> = horizons.iter().copied().collect();
    let mut out = Vec::with_capacity(dates.len() * locs.len() * hs.len());
    for &d in &dates {
        for &l in &locs {
            for &h in &hs {
                out.push(TaskKey::new(d, l.clone(), h));
            }
        }
    }
    Ok(out)
}

/// Saturdays from `start` through `end` inclusive, starting at the first
/// Saturday on or after `start`.
pub fn saturdays_between(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let offset = (6 - start.weekday().num_days_from_sunday() as i64).rem_euclid(7);
    let mut d = start + Duration::days(offset);
    let mut out = Vec::new();
    while d <= end {
        out.push(d);
        d += Duration::weeks(1);
    }
    out
}

/// MMWR epiweek `(year, week)` of the week ending on `saturday`.
///
/// Week 1 is the first Sunday-to-Saturday week holding at least four days of
/// the year, i.e. the week whose Wednesday falls in the year.
pub fn epiweek(date: NaiveDate) -> (i32, u32) {
    let wednesday = date - Duration::days(date.weekday().num_days_from_sunday() as i64)
        + Duration::days(3);
    (wednesday.year(), (wednesday.ordinal() - 1) / 7 + 1)
}

/// The 23 quantile levels a forecast is aligned to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileLevels {
    levels: [f64; N_QUANTILES],
}

impl QuantileLevels {
    pub fn canonical() -> Self {
        Self {
            levels: CANONICAL_LEVELS,
        }
    }

    /// Validates a custom level set: strictly increasing in (0,1),
    /// symmetric about 0.5 and containing it.
    pub fn new(levels: &[f64]) -> Result<Self, ModelError> {
        if levels.len() != N_QUANTILES {
            return Err(ModelError::WrongQuantileCount(levels.len()));
        }
        if levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(ModelError::InvalidLevels("levels must lie in (0,1)"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidLevels("levels must be strictly increasing"));
        }
        if levels[MEDIAN_INDEX] != 0.5 {
            return Err(ModelError::InvalidLevels("levels must contain 0.5 at the centre"));
        }
        for k in 0..N_INTERVALS {
            if (levels[k] + levels[N_QUANTILES - 1 - k] - 1.0).abs() > 1e-12 {
                return Err(ModelError::InvalidLevels("levels must be symmetric about 0.5"));
            }
        }
        let mut arr = [0.0; N_QUANTILES];
        arr.copy_from_slice(levels);
        Ok(Self { levels: arr })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.levels
    }

    /// Central-interval miscoverage rates `α_k = 2·level_k`, widest first.
    pub fn alphas(&self) -> [f64; N_INTERVALS] {
        let mut out = [0.0; N_INTERVALS];
        for (k, a) in out.iter_mut().enumerate() {
            *a = 2.0 * self.levels[k];
        }
        out
    }
}

impl Default for QuantileLevels {
    fn default() -> Self {
        Self::canonical()
    }
}

pub(crate) fn check_monotone(values: &[f64]) -> Result<(), ModelError> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(ModelError::NonFinite { index: i });
        }
    }
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            return Err(ModelError::QuantileCrossing { index: i });
        }
    }
    Ok(())
}

/// A 23-quantile predictive distribution of admission counts for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    task: TaskKey,
    values: [f64; N_QUANTILES],
}

impl QuantileForecast {
    pub fn new(task: TaskKey, values: &[f64]) -> Result<Self, ModelError> {
        if values.len() != N_QUANTILES {
            return Err(ModelError::WrongQuantileCount(values.len()));
        }
        check_monotone(values)?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(ModelError::NegativeCount { index, value });
        }
        let mut arr = [0.0; N_QUANTILES];
        arr.copy_from_slice(values);
        Ok(Self { task, values: arr })
    }

    /// Every quantile at `value`.
    pub fn point_mass(task: TaskKey, value: f64) -> Result<Self, ModelError> {
        Self::new(task, &[value; N_QUANTILES])
    }

    pub fn task(&self) -> &TaskKey {
        &self.task
    }

    pub fn values(&self) -> &[f64; N_QUANTILES] {
        &self.values
    }

    pub fn median(&self) -> f64 {
        self.values[MEDIAN_INDEX]
    }

    pub fn with_task(mut self, task: TaskKey) -> Self {
        self.task = task;
        self
    }
}

/// Predictive draws for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleForecast {
    task: TaskKey,
    samples: Vec<f64>,
}

impl SampleForecast {
    pub const DEFAULT_SIZE: usize = 1000;

    pub fn new(task: TaskKey, samples: Vec<f64>) -> Result<Self, ModelError> {
        if samples.len() < 2 {
            return Err(ModelError::TooFewSamples(samples.len()));
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
        Ok(Self { task, samples })
    }

    pub fn task(&self) -> &TaskKey {
        &self.task
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationPoint {
    pub date: NaiveDate,
    pub value: f64,
    pub provenance: Provenance,
}

/// Weekly counts for one location on a gap-free 7-day grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    location: String,
    points: Vec<ObservationPoint>,
}

impl ObservationSeries {
    pub fn new(
        location: impl Into<String>,
        points: Vec<ObservationPoint>,
    ) -> Result<Self, ModelError> {
        let location = location.into();
        let bad = |reason: String| ModelError::InvalidSeries {
            location: location.clone(),
            reason,
        };
        for p in &points {
            if !p.value.is_finite() || p.value < 0.0 {
                return Err(bad(format!("invalid value {} on {}", p.value, p.date)));
            }
        }
        for w in points.windows(2) {
            if w[1].date - w[0].date != Duration::weeks(1) {
                return Err(bad(format!(
                    "dates {} and {} are not one week apart",
                    w[0].date, w[1].date
                )));
            }
        }
        Ok(Self { location, points })
    }

    /// Consecutive weekly observed values starting at `start`.
    pub fn from_values(
        location: impl Into<String>,
        start: NaiveDate,
        values: &[f64],
    ) -> Result<Self, ModelError> {
        let points = values
            .iter()
            .enumerate()
            .map(|(i, &value)| ObservationPoint {
                date: start + Duration::weeks(i as i64),
                value,
                provenance: Provenance::Observed,
            })
            .collect();
        Self::new(location, points)
    }

    pub fn location(&self) -> &str {
        &self.location
    }

    pub fn points(&self) -> &[ObservationPoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn get(&self, date: NaiveDate) -> Option<&ObservationPoint> {
        let first = self.points.first()?.date;
        let offset = (date - first).num_days();
        if offset < 0 || offset % 7 != 0 {
            return None;
        }
        self.points.get((offset / 7) as usize)
    }

    /// Points dated on or before `date`.
    pub fn up_to(&self, date: NaiveDate) -> &[ObservationPoint] {
        let n = self.points.partition_point(|p| p.date <= date);
        &self.points[..n]
    }

    /// Copy holding only points on or before `date`.
    pub fn truncated(&self, date: NaiveDate) -> Self {
        Self {
            location: self.location.clone(),
            points: self.up_to(date).to_vec(),
        }
    }
}

/// The observed value for a task, if the series covers its target week.
pub fn lookup_truth(series: &ObservationSeries, task: &TaskKey) -> Option<ObservationPoint> {
    series.get(task.target_end_date()).copied()
}

/// Locations plus their observation series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub locations: LocationTable,
    pub series: BTreeMap<String, ObservationSeries>,
}

impl Dataset {
    pub fn new(locations: LocationTable, series: impl IntoIterator<Item = ObservationSeries>) -> Self {
        let series = series
            .into_iter()
            .map(|s| (s.location().to_string(), s))
            .collect();
        Self { locations, series }
    }

    pub fn series(&self, location: &str) -> Option<&ObservationSeries> {
        self.series.get(location)
    }

    /// Everything observed on or before `date`.
    pub fn truncated(&self, date: NaiveDate) -> Self {
        Self {
            locations: self.locations.clone(),
            series: self
                .series
                .iter()
                .map(|(k, s)| (k.clone(), s.truncated(date)))
                .collect(),
        }
    }

    pub fn truth(&self, task: &TaskKey) -> Option<f64> {
        self.series(&task.location)
            .and_then(|s| lookup_truth(s, task))
            .map(|p| p.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn canonical_levels_are_valid_and_alphas_match_eleven_intervals() {
        let levels = QuantileLevels::new(&CANONICAL_LEVELS).unwrap();
        let alphas = levels.alphas();
        let expected = [0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        for (a, e) in alphas.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
        for (lit, lvl) in CANONICAL_LEVEL_LITERALS.iter().zip(CANONICAL_LEVELS) {
            assert_eq!(lit.parse::<f64>().unwrap(), lvl);
        }
    }

    #[test]
    fn rejects_asymmetric_levels() {
        let mut lv = CANONICAL_LEVELS;
        lv[0] = 0.02;
        assert!(QuantileLevels::new(&lv).is_err());
    }

    #[test]
    fn task_space_single() {
        let t = build_task_space(&[d("2026-01-03")], &["01".into()], &[Horizon::new(0).unwrap()])
            .unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn task_space_empty_axis() {
        let err = build_task_space(&[], &["01".into()], &Horizon::all()).unwrap_err();
        assert!(err.to_string().contains("empty task-space axis"));
    }

    #[test]
    fn task_space_is_sorted_and_sized() {
        let dates = saturdays_between(d("2025-11-22"), d("2026-05-02"));
        assert_eq!(dates.len(), 24);
        let locs: Vec<String> = (1..=52).map(|i| format!("{i:02}")).collect();
        let t = build_task_space(&dates, &locs, &Horizon::all()).unwrap();
        assert_eq!(t.len(), 4992);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        for k in &t {
            assert_eq!((k.target_end_date() - k.reference_date).num_days(), 7 * k.horizon.weeks() as i64);
        }
    }

    #[test]
    fn horizon_bounds() {
        assert!(Horizon::new(-1).is_err());
        assert!(Horizon::new(4).is_err());
        assert_eq!(Horizon::new(3).unwrap().weeks(), 3);
    }

    #[test]
    fn epiweek_boundaries() {
        // 2025-01-04 ends MMWR week 1 of 2025; 2026-01-03 ends week 53 of 2025.
        assert_eq!(epiweek(d("2025-01-04")), (2025, 1));
        assert_eq!(epiweek(d("2026-01-03")), (2025, 53));
        assert_eq!(epiweek(d("2026-01-10")), (2026, 1));
        assert_eq!(epiweek(d("2024-12-28")), (2024, 52));
    }

    #[test]
    fn truth_lookup() {
        let s = ObservationSeries::new(
            "01",
            vec![
                ObservationPoint { date: d("2025-12-27"), value: 100.0, provenance: Provenance::Observed },
                ObservationPoint { date: d("2026-01-03"), value: 120.0, provenance: Provenance::Interpolated },
            ],
        )
        .unwrap();
        let task = TaskKey::new(d("2025-12-27"), "01", Horizon::new(1).unwrap());
        let p = lookup_truth(&s, &task).unwrap();
        assert_eq!(p.value, 120.0);
        assert_eq!(p.provenance, Provenance::Interpolated);
        let beyond = TaskKey::new(d("2026-01-03"), "01", Horizon::new(1).unwrap());
        assert!(lookup_truth(&s, &beyond).is_none());
        let off_grid = TaskKey::new(d("2026-01-01"), "01", Horizon::new(0).unwrap());
        assert!(lookup_truth(&s, &off_grid).is_none());
    }

    #[test]
    fn series_rejects_gaps_and_negatives() {
        let p = |date: &str, value| ObservationPoint { date: d(date), value, provenance: Provenance::Observed };
        assert!(ObservationSeries::new("x", vec![p("2026-01-03", 1.0), p("2026-01-17", 2.0)]).is_err());
        assert!(ObservationSeries::new("x", vec![p("2026-01-03", -1.0)]).is_err());
    }

    #[test]
    fn forecast_constructor_enforces_invariants() {
        let task = TaskKey::new(d("2026-01-03"), "01", Horizon::new(0).unwrap());
        let mut v: Vec<f64> = (0..23).map(|i| i as f64).collect();
        assert!(QuantileForecast::new(task.clone(), &v).is_ok());
        v.swap(3, 4);
        assert_eq!(
            QuantileForecast::new(task.clone(), &v).unwrap_err(),
            ModelError::QuantileCrossing { index: 4 }
        );
        assert!(QuantileForecast::new(task.clone(), &[-1.0; 23]).is_err());
        assert!(QuantileForecast::new(task.clone(), &[1.0; 22]).is_err());
        assert!(SampleForecast::new(task.clone(), vec![1.0]).is_err());
        assert!(SampleForecast::new(task, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn location_table_rejects_duplicates() {
        let a = Location::new("01", "Alabama", 5_000_000).unwrap();
        assert!(LocationTable::new([a.clone(), a]).is_err());
        assert!(Location::new("02", "Alaska", 0).is_err());
    }
}
