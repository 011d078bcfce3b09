//! Location tables and weekly target series.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};

use super::{column_indices, IoError};
use crate::model::{Location, LocationTable, ObservationPoint, ObservationSeries, Provenance};

/// Reads `location`, `population` and optionally `location_name`.
pub fn load_locations(bytes: &[u8]) -> Result<LocationTable, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = rdr.headers()?.clone();
    let [c_loc, c_pop] = column_indices(&headers, [&["location"], &["population"]])?;
    let c_name = headers.iter().position(|h| h.trim() == "location_name");
    let mut locations = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let raw = &rec[c_pop];
        let population = raw
            .parse::<u64>()
            .ok()
            .or_else(|| {
                raw.parse::<f64>()
                    .ok()
                    .filter(|p| p.is_finite() && *p >= 0.0 && p.fract() == 0.0)
                    .map(|p| p as u64)
            })
            .ok_or_else(|| IoError::Row {
                row,
                message: format!("invalid population '{raw}'"),
            })?;
        let code = rec[c_loc].to_string();
        let name = c_name.map_or_else(|| code.clone(), |i| rec[i].to_string());
        locations.push(Location::new(code, name, population).map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?);
    }
    LocationTable::new(locations).map_err(IoError::from)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetLoad {
    pub series: Vec<ObservationSeries>,
    pub warnings: Vec<String>,
}

/// Reads `(date, location, value)` rows into one weekly series per location.
///
/// Non-numeric and negative values are dropped. Interior gaps on the weekly
/// grid are filled by linear interpolation between the nearest observed
/// neighbours; nothing is extrapolated past the first or last observation.
/// `target_end_date` is accepted in place of `date`.
pub fn load_target_series(bytes: &[u8], locations: &LocationTable) -> Result<TargetLoad, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = rdr.headers()?.clone();
    let [c_date, c_loc, c_val] = column_indices(
        &headers,
        [&["date", "target_end_date"], &["location"], &["value", "observation"]],
    )?;

    let mut warnings = Vec::new();
    let mut observed: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let code = &rec[c_loc];
        if !locations.contains(code) {
            return Err(IoError::UnknownLocation {
                row,
                code: code.to_string(),
            });
        }
        let date: NaiveDate = rec[c_date].parse().map_err(|_| IoError::Row {
            row,
            message: format!("invalid date '{}'", &rec[c_date]),
        })?;
        let points = observed.entry(code.to_string()).or_default();
        match rec[c_val].parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => {
                if points.insert(date, v).is_some() {
                    return Err(IoError::Row {
                        row,
                        message: format!("duplicate observation for {code} on {date}"),
                    });
                }
            }
            _ => warnings.push(format!(
                "row {row}: dropped non-numeric value '{}' for {code} on {date}",
                &rec[c_val]
            )),
        }
    }

    let mut series = Vec::with_capacity(observed.len());
    for (code, points) in observed {
        if points.is_empty() {
            warnings.push(format!("location {code}: no observed values"));
        }
        series.push(fill_weekly(&code, &points)?);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(TargetLoad { series, warnings })
}

fn fill_weekly(code: &str, points: &BTreeMap<NaiveDate, f64>) -> Result<ObservationSeries, IoError> {
    let mut out: Vec<ObservationPoint> = Vec::new();
    let mut prev: Option<(NaiveDate, f64)> = None;
    for (&date, &value) in points {
        if let Some((d0, v0)) = prev {
            let days = (date - d0).num_days();
            if days % 7 != 0 {
                return Err(IoError::Csv(format!(
                    "location {code}: {date} is not on the weekly grid starting {d0}"
                )));
            }
            let gap = days / 7;
            for k in 1..gap {
                let frac = k as f64 / gap as f64;
                out.push(ObservationPoint {
                    date: d0 + Duration::weeks(k),
                    value: v0 + frac * (value - v0),
                    provenance: Provenance::Interpolated,
                });
            }
        }
        out.push(ObservationPoint {
            date,
            value,
            provenance: Provenance::Observed,
        });
        prev = Some((date, value));
    }
    Ok(ObservationSeries::new(code, out)?)
}
