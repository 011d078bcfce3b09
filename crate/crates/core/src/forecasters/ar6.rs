//! Pooled AR(6) on the fourth-root scale.
//!
//! One set of lag coefficients and an intercept is fit by least squares over
//! every location; each location keeps its own residual standard deviation.
//! Forecasts simulate the recursion forward with Gaussian innovations.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::flatline::steps_ahead;
use super::{parse_param, task_seed, unknown_key, ForecastError, ForecasterKind};
use crate::model::{Dataset, QuantileForecast, TaskKey, CANONICAL_LEVELS};
use crate::stats::sorted_quantile;

pub const ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Ar6Params {
    /// Offset added before the fourth root.
    pub epsilon: f64,
    /// Lower bound on each location's residual standard deviation.
    pub sigma_floor: f64,
    pub n_trajectories: usize,
    /// Multiplier on the fitted innovation standard deviation.
    pub innovation_scale: f64,
    /// Adds an indicator regressor for the week containing 25 December.
    pub holiday: bool,
    pub seed: u64,
}

impl Default for Ar6Params {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            sigma_floor: 1e-4,
            n_trajectories: 10_000,
            innovation_scale: 1.0,
            holiday: false,
            seed: 0,
        }
    }
}

impl Ar6Params {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be > 0");
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return bad("sigma_floor must be > 0");
        }
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be ≥ 1");
        }
        if !(self.innovation_scale >= 0.0 && self.innovation_scale.is_finite()) {
            return bad("innovation_scale must be ≥ 0");
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epsilon", self.epsilon.to_string()),
            ("sigma_floor", self.sigma_floor.to_string()),
            ("n_trajectories", self.n_trajectories.to_string()),
            ("innovation_scale", self.innovation_scale.to_string()),
            ("holiday", self.holiday.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ForecastError> {
        match key {
            "epsilon" => self.epsilon = parse_param(key, value)?,
            "sigma_floor" => self.sigma_floor = parse_param(key, value)?,
            "n_trajectories" => self.n_trajectories = parse_param(key, value)?,
            "innovation_scale" => self.innovation_scale = parse_param(key, value)?,
            "holiday" => self.holiday = parse_param(key, value)?,
            "seed" => self.seed = parse_param(key, value)?,
            _ => return Err(unknown_key(key, ForecasterKind::Ar6Pooled)),
        }
        Ok(())
    }
}

pub fn transform(x: f64, epsilon: f64) -> f64 {
    (x + epsilon).powf(0.25)
}

/// Inverse of [`transform`]; negative inputs are treated as zero.
pub fn inverse_transform(v: f64, epsilon: f64) -> f64 {
    let v = v.max(0.0);
    (v * v) * (v * v) - epsilon
}

/// 1 when the week ending on `date` contains 25 December.
pub fn christmas_week(date: NaiveDate) -> f64 {
    let start = date - Duration::days(6);
    let hit = [start.year(), date.year()].iter().any(|&y| {
        NaiveDate::from_ymd_opt(y, 12, 25).is_some_and(|c| c >= start && c <= date)
    });
    if hit {
        1.0
    } else {
        0.0
    }
}

/// Transformed-scale series, one per location, on a weekly grid.
pub type TransformedSeries = BTreeMap<String, Vec<(NaiveDate, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Ar6Fit {
    /// Lag coefficients, lag 1 first.
    pub coefficients: [f64; ORDER],
    pub intercept: f64,
    /// Holiday coefficient when the indicator was included.
    pub holiday: Option<f64>,
    pub location_sigma: BTreeMap<String, f64>,
    /// Residual standard deviation over all rows, for locations without any.
    pub pooled_sigma: f64,
    /// Numerical rank of the design matrix.
    pub rank: usize,
}

impl Ar6Fit {
    pub fn sigma(&self, location: &str) -> f64 {
        self.location_sigma
            .get(location)
            .copied()
            .unwrap_or(self.pooled_sigma)
    }

    /// Long-run mean implied by the intercept and lag coefficients, or the
    /// intercept itself when the recursion has a unit root.
    pub fn implied_level(&self) -> f64 {
        let persistence: f64 = self.coefficients.iter().sum();
        let level = self.intercept / (1.0 - persistence);
        if (1.0 - persistence).abs() > 1e-8 && level.is_finite() {
            level
        } else {
            self.intercept
        }
    }

    /// Conditional mean of the next value. `lags[0]` is the most recent.
    pub fn one_step(&self, lags: &[f64; ORDER], date: NaiveDate) -> f64 {
        let mut m = self.intercept;
        for (c, x) in self.coefficients.iter().zip(lags) {
            m += c * x;
        }
        if let Some(h) = self.holiday {
            m += h * christmas_week(date);
        }
        m
    }

    /// Noise-free recursion `steps` weeks past `last`.
    pub fn deterministic(&self, lags: &[f64; ORDER], last: NaiveDate, steps: usize) -> f64 {
        let mut buf = *lags;
        let mut v = buf[0];
        for s in 1..=steps {
            v = self.one_step(&buf, last + Duration::weeks(s as i64));
            buf.rotate_right(1);
            buf[0] = v;
        }
        v
    }
}

/// Minimum-norm least squares through the eigendecomposition of `XᵀX`,
/// dropping directions whose eigenvalue is negligible. Returns the solution
/// and the numerical rank.
fn min_norm_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, usize) {
    let xty = x.transpose() * y;
    let eig = SymmetricEigen::new(x.transpose() * x);
    let tol = eig.eigenvalues.max().max(0.0) * 1e-12;
    let mut beta = DVector::zeros(x.ncols());
    let mut rank = 0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tol {
            let v = eig.eigenvectors.column(i);
            beta += v * (v.dot(&xty) / l);
            rank += 1;
        }
    }
    (beta, rank)
}

/// Fits the pooled model on already transformed data.
pub fn fit_transformed(
    series: &TransformedSeries,
    holiday: bool,
    sigma_floor: f64,
) -> Result<Ar6Fit, ForecastError> {
    let p = ORDER + 1 + usize::from(holiday);
    let mut rows: Vec<f64> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut owners: Vec<&str> = Vec::new();
    for (loc, pts) in series {
        for t in ORDER..pts.len() {
            for lag in 1..=ORDER {
                rows.push(pts[t - lag].1);
            }
            rows.push(1.0);
            if holiday {
                rows.push(christmas_week(pts[t].0));
            }
            targets.push(pts[t].1);
            owners.push(loc);
        }
    }
    let n = targets.len();
    if n < p {
        return Err(ForecastError::DegenerateDesign(format!(
            "{n} lag rows for {p} parameters"
        )));
    }
    if rows.iter().chain(&targets).any(|v| !v.is_finite()) {
        return Err(ForecastError::DegenerateDesign("non-finite entries".into()));
    }
    let x = DMatrix::from_row_slice(n, p, &rows);
    let y = DVector::from_vec(targets);
    let (beta, rank) = min_norm_least_squares(&x, &y);
    if rank == 0 {
        return Err(ForecastError::DegenerateDesign("all-zero design".into()));
    }
    if rank < p {
        log::warn!("pooled AR design has rank {rank} < {p}; using minimum-norm solution");
    }
    let resid = &y - &x * &beta;

    let mut ssr: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (r, loc) in resid.iter().zip(&owners) {
        let e = ssr.entry(loc).or_insert((0.0, 0));
        e.0 += r * r;
        e.1 += 1;
    }
    let total: f64 = resid.iter().map(|r| r * r).sum();
    let pooled_sigma = (total / n as f64).sqrt().max(sigma_floor);
    let location_sigma = series
        .keys()
        .map(|loc| {
            let s = match ssr.get(loc.as_str()) {
                Some(&(s, k)) => (s / k as f64).sqrt().max(sigma_floor),
                None => pooled_sigma,
            };
            (loc.clone(), s)
        })
        .collect();

    let mut coefficients = [0.0; ORDER];
    coefficients.copy_from_slice(&beta.as_slice()[..ORDER]);
    Ok(Ar6Fit {
        coefficients,
        intercept: beta[ORDER],
        holiday: holiday.then(|| beta[ORDER + 1]),
        location_sigma,
        pooled_sigma,
        rank,
    })
}

pub fn transformed_data(data: &Dataset, epsilon: f64) -> TransformedSeries {
    data.series
        .iter()
        .map(|(loc, s)| {
            let pts = s
                .points()
                .iter()
                .map(|p| (p.date, transform(p.value, epsilon)))
                .collect();
            (loc.clone(), pts)
        })
        .collect()
}

pub fn fit(data: &Dataset, params: &Ar6Params) -> Result<Ar6Fit, ForecastError> {
    fit_transformed(
        &transformed_data(data, params.epsilon),
        params.holiday,
        params.sigma_floor,
    )
}

/// Most recent six transformed values at the reference date, padded with
/// the implied level when the history is short, plus the last observed date.
pub fn lag_buffer(
    fit: &Ar6Fit,
    data: &Dataset,
    task: &TaskKey,
    epsilon: f64,
) -> ([f64; ORDER], NaiveDate) {
    let mut buf = [fit.implied_level(); ORDER];
    let history = data
        .series(&task.location)
        .map(|s| s.up_to(task.reference_date))
        .unwrap_or(&[]);
    for (slot, p) in buf.iter_mut().zip(history.iter().rev()) {
        *slot = transform(p.value, epsilon);
    }
    let last = history
        .last()
        .map_or(task.reference_date - Duration::weeks(1), |p| p.date);
    (buf, last)
}

pub fn forecast_task(
    fit: &Ar6Fit,
    data: &Dataset,
    task: &TaskKey,
    params: &Ar6Params,
) -> Result<QuantileForecast, ForecastError> {
    let (lags, last) = lag_buffer(fit, data, task, params.epsilon);
    let steps = steps_ahead(last, task);
    let sigma = fit.sigma(&task.location) * params.innovation_scale;
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed(params.seed, task));

    let mut finals = Vec::with_capacity(params.n_trajectories);
    for _ in 0..params.n_trajectories {
        let mut buf = lags;
        let mut v = buf[0];
        for s in 1..=steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            v = fit.one_step(&buf, last + Duration::weeks(s as i64)) + sigma * z;
            buf.rotate_right(1);
            buf[0] = v;
        }
        finals.push(v);
    }
    finals.sort_by(f64::total_cmp);
    let values: Vec<f64> = CANONICAL_LEVELS
        .iter()
        .map(|&p| inverse_transform(sorted_quantile(&finals, p), params.epsilon).max(0.0))
        .collect();
    Ok(QuantileForecast::new(task.clone(), &values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Horizon, Location, LocationTable, ObservationSeries};
    use proptest::prelude::*;
    use rand::Rng;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    const PHI: [f64; ORDER] = [0.45, 0.2, 0.1, -0.05, 0.08, 0.05];
    const C: f64 = 0.5;

    /// Simulated transformed-scale AR(6) with the given noise scale.
    fn simulate(len: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<(NaiveDate, f64)> {
        let level = C / (1.0 - PHI.iter().sum::<f64>());
        let mut xs = vec![level; ORDER];
        for _ in 0..len + 200 {
            let n = xs.len();
            let mut m = C;
            for (k, phi) in PHI.iter().enumerate() {
                m += phi * xs[n - 1 - k];
            }
            let z: f64 = StandardNormal.sample(rng);
            xs.push(m + sigma * z);
        }
        let start = d("2020-01-04");
        xs[xs.len() - len..]
            .iter()
            .enumerate()
            .map(|(i, &v)| (start + Duration::weeks(i as i64), v))
            .collect()
    }

    #[test]
    fn recovers_known_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut series = TransformedSeries::new();
        series.insert("A".into(), simulate(4000, 0.05, &mut rng));
        series.insert("B".into(), simulate(4000, 0.2, &mut rng));
        let fit = fit_transformed(&series, false, 1e-4).unwrap();
        for (est, truth) in fit.coefficients.iter().zip(PHI) {
            assert!((est - truth).abs() < 0.05, "{est} vs {truth}");
        }
        assert!(fit.sigma("A") < fit.sigma("B"));
        assert!((fit.sigma("A") - 0.05).abs() < 0.01);
        assert_eq!(fit.rank, ORDER + 1);
    }

    #[test]
    fn constant_series_is_a_fixed_point() {
        let s = ObservationSeries::from_values("A", d("2024-01-06"), &[25.0; 30]).unwrap();
        let table = LocationTable::new([Location::new("A", "A", 1_000_000).unwrap()]).unwrap();
        let data = Dataset::new(table, [s]);
        let p = Ar6Params::default();
        let fit = fit(&data, &p).unwrap();
        let x = transform(25.0, p.epsilon);
        let pred = fit.one_step(&[x; ORDER], d("2024-08-03"));
        assert!((pred - x).abs() < 1e-10);
        assert_eq!(fit.sigma("A"), p.sigma_floor);
        assert!(fit.rank < ORDER + 1);

        let task = TaskKey::new(d("2024-07-27"), "A", Horizon::new(3).unwrap());
        let f = forecast_task(&fit, &data, &task, &p).unwrap();
        assert!(f.values().iter().all(|v| (v - 25.0).abs() < 0.05));
    }

    #[test]
    fn too_few_rows_is_degenerate() {
        let mut series = TransformedSeries::new();
        let start = d("2024-01-06");
        series.insert(
            "A".into(),
            (0..9).map(|i| (start + Duration::weeks(i), i as f64)).collect(),
        );
        assert!(matches!(
            fit_transformed(&series, false, 1e-4),
            Err(ForecastError::DegenerateDesign(_))
        ));
    }

    #[test]
    fn location_without_rows_uses_pooled_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut series = TransformedSeries::new();
        series.insert("A".into(), simulate(300, 0.1, &mut rng));
        series.insert("B".into(), simulate(4, 0.1, &mut rng));
        let fit = fit_transformed(&series, false, 1e-4).unwrap();
        assert_eq!(fit.sigma("B"), fit.pooled_sigma);
        assert_eq!(fit.sigma("unseen"), fit.pooled_sigma);
    }

    #[test]
    fn zero_noise_collapses_to_recursion() {
        let fit = Ar6Fit {
            coefficients: PHI,
            intercept: C,
            holiday: None,
            location_sigma: BTreeMap::new(),
            pooled_sigma: 1e-12,
            rank: 7,
        };
        let start = d("2025-06-07");
        let values = [30.0, 34.0, 40.0, 47.0, 52.0, 60.0, 66.0];
        let s = ObservationSeries::from_values("A", start, &values).unwrap();
        let table = LocationTable::new([Location::new("A", "A", 1_000_000).unwrap()]).unwrap();
        let data = Dataset::new(table, [s]);
        let p = Ar6Params {
            n_trajectories: 200,
            ..Default::default()
        };
        let task = TaskKey::new(start + Duration::weeks(6), "A", Horizon::new(2).unwrap());
        let f = forecast_task(&fit, &data, &task, &p).unwrap();
        let (lags, last) = lag_buffer(&fit, &data, &task, p.epsilon);
        let expect = inverse_transform(fit.deterministic(&lags, last, 2), p.epsilon);
        for v in f.values() {
            assert!((v - expect).abs() < 1e-6 * expect.max(1.0));
        }
    }

    #[test]
    fn median_tracks_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut series = TransformedSeries::new();
        series.insert("A".into(), simulate(600, 0.1, &mut rng));
        let fit = fit_transformed(&series, false, 1e-4).unwrap();
        let start = d("2025-01-04");
        let raw: Vec<f64> = (0..12).map(|i| 60.0 + 5.0 * (i as f64).sin()).collect();
        let s = ObservationSeries::from_values("A", start, &raw).unwrap();
        let table = LocationTable::new([Location::new("A", "A", 1_000_000).unwrap()]).unwrap();
        let data = Dataset::new(table, [s]);
        let p = Ar6Params::default();
        let task = TaskKey::new(start + Duration::weeks(11), "A", Horizon::new(3).unwrap());
        let f = forecast_task(&fit, &data, &task, &p).unwrap();
        let (lags, last) = lag_buffer(&fit, &data, &task, p.epsilon);
        let expect = inverse_transform(fit.deterministic(&lags, last, 3), p.epsilon);
        assert!((f.median() - expect).abs() / expect < 0.01);
    }

    #[test]
    fn short_history_pads_with_implied_level() {
        let fit = Ar6Fit {
            coefficients: [0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
            intercept: 1.0,
            holiday: None,
            location_sigma: BTreeMap::new(),
            pooled_sigma: 0.1,
            rank: 7,
        };
        assert_eq!(fit.implied_level(), 2.0);
        let s = ObservationSeries::from_values("A", d("2025-01-04"), &[15.99]).unwrap();
        let table = LocationTable::new([Location::new("A", "A", 1_000_000).unwrap()]).unwrap();
        let data = Dataset::new(table, [s]);
        let task = TaskKey::new(d("2025-01-04"), "A", Horizon::new(0).unwrap());
        let (buf, last) = lag_buffer(&fit, &data, &task, 0.01);
        assert!((buf[0] - 2.0).abs() < 1e-12);
        assert_eq!(&buf[1..], &[2.0; 5]);
        assert_eq!(last, d("2025-01-04"));

        let unit = Ar6Fit {
            coefficients: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            ..fit
        };
        assert_eq!(unit.implied_level(), 1.0);
    }

    #[test]
    fn christmas_indicator() {
        assert_eq!(christmas_week(d("2025-12-27")), 1.0);
        assert_eq!(christmas_week(d("2025-12-20")), 0.0);
        assert_eq!(christmas_week(d("2026-01-03")), 0.0);
        assert_eq!(christmas_week(d("2022-12-31")), 1.0);
        assert_eq!(christmas_week(d("2022-12-25")), 1.0);
        assert_eq!(christmas_week(d("2023-01-07")), 0.0);
    }

    #[test]
    fn holiday_effect_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = simulate(2000, 0.02, &mut rng);
        // Re-run the recursion with a bump on Christmas weeks.
        for t in ORDER..pts.len() {
            let mut m = C;
            for (k, phi) in PHI.iter().enumerate() {
                m += phi * pts[t - 1 - k].1;
            }
            m += 0.3 * christmas_week(pts[t].0);
            pts[t].1 = m + 0.02 * rng.random_range(-1.0..1.0);
        }
        let mut series = TransformedSeries::new();
        series.insert("A".into(), pts);
        let fit = fit_transformed(&series, true, 1e-4).unwrap();
        assert!((fit.holiday.unwrap() - 0.3).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn transform_round_trips(x in 0.0f64..1e6) {
            let back = inverse_transform(transform(x, 0.01), 0.01);
            prop_assert!((back - x).abs() <= 1e-9 * x.max(1.0));
        }

        #[test]
        fn translation_shifts_one_step(shift in -2.0f64..2.0, seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut base = TransformedSeries::new();
            base.insert("A".into(), simulate(120, 0.1, &mut rng));
            base.insert("B".into(), simulate(120, 0.3, &mut rng));
            let shifted: TransformedSeries = base
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|&(d, x)| (d, x + shift)).collect()))
                .collect();
            let f0 = fit_transformed(&base, false, 1e-4).unwrap();
            let f1 = fit_transformed(&shifted, false, 1e-4).unwrap();
            let lags = [1.0, 1.2, 0.9, 1.1, 1.0, 0.8];
            let moved = lags.map(|x| x + shift);
            let date = d("2026-02-07");
            prop_assert!((f1.one_step(&moved, date) - f0.one_step(&lags, date) - shift).abs() < 1e-8);
        }

        #[test]
        fn forecasts_are_valid(vals in prop::collection::vec(0.0f64..300.0, 14..40), h in 0i64..4) {
            let start = d("2025-01-04");
            let s = ObservationSeries::from_values("A", start, &vals).unwrap();
            let table = LocationTable::new([Location::new("A", "A", 1_000_000).unwrap()]).unwrap();
            let data = Dataset::new(table, [s]);
            let p = Ar6Params { n_trajectories: 500, ..Default::default() };
            let fit = fit(&data, &p).unwrap();
            let task = TaskKey::new(start + Duration::weeks(vals.len() as i64 - 1), "A", Horizon::new(h).unwrap());
            let f = forecast_task(&fit, &data, &task, &p).unwrap();
            prop_assert!(f.values().windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(f.values().iter().all(|&v| v >= 0.0));
        }
    }
}
