//! Seven-column quantile submission files.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use super::{column_indices, IoError};
use crate::model::{Horizon, QuantileForecast, TaskKey, CANONICAL_LEVEL_LITERALS, N_QUANTILES};

pub const SUBMISSION_COLUMNS: [&str; 7] = [
    "reference_date",
    "target",
    "horizon",
    "location",
    "output_type",
    "output_type_id",
    "value",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionFile {
    pub model_id: String,
    pub target: String,
    pub forecasts: BTreeMap<TaskKey, QuantileForecast>,
}

impl SubmissionFile {
    pub fn tasks(&self) -> impl Iterator<Item = &TaskKey> {
        self.forecasts.keys()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOptions {
    /// Keep only rows for this target; others are skipped unchecked.
    pub target: Option<String>,
    /// Skip rows of other output types and horizons outside the task range
    /// instead of rejecting the file.
    pub lenient: bool,
}

/// Canonical literal for a decimal probability string, if it is one of the
/// 23 levels. Trailing zeros and a bare leading point are accepted, so
/// `"0.50"` and `".5"` both map to `"0.5"`.
pub fn normalize_level(s: &str) -> Option<&'static str> {
    let s = s.trim();
    let mut t = s.to_string();
    if t.starts_with('.') {
        t.insert(0, '0');
    }
    if t.contains('.') {
        while t.ends_with('0') {
            t.pop();
        }
        if t.ends_with('.') {
            t.pop();
        }
    }
    CANONICAL_LEVEL_LITERALS.iter().copied().find(|&lit| lit == t)
}

fn level_index(literal: &str) -> usize {
    CANONICAL_LEVEL_LITERALS
        .iter()
        .position(|&l| l == literal)
        .expect("canonical literal")
}

struct TaskRows {
    first_row: u64,
    values: [Option<(f64, u64)>; N_QUANTILES],
}

pub fn parse_submission(
    bytes: &[u8],
    model_id: &str,
    opts: &ParseOptions,
) -> Result<SubmissionFile, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = rdr.headers()?.clone();
    let [c_ref, c_target, c_h, c_loc, c_type, c_id, c_val] = column_indices(
        &headers,
        [
            &["reference_date"],
            &["target"],
            &["horizon"],
            &["location"],
            &["output_type"],
            &["output_type_id"],
            &["value"],
        ],
    )?;

    let mut targets = BTreeSet::new();
    let mut tasks: BTreeMap<TaskKey, TaskRows> = BTreeMap::new();
    let mut skipped = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| IoError::Row { row, message };
        let target = &rec[c_target];
        if opts.target.as_deref().is_some_and(|t| t != target) {
            continue;
        }
        if opts.lenient && &rec[c_type] != "quantile" {
            skipped += 1;
            continue;
        }
        targets.insert(target.to_string());
        if &rec[c_type] != "quantile" {
            return Err(bad(format!("unsupported output_type '{}'", &rec[c_type])));
        }
        let date: NaiveDate = rec[c_ref]
            .parse()
            .map_err(|_| bad(format!("invalid reference_date '{}'", &rec[c_ref])))?;
        let h: i64 = rec[c_h]
            .parse()
            .map_err(|_| bad(format!("invalid horizon '{}'", &rec[c_h])))?;
        let horizon = match Horizon::new(h) {
            Ok(h) => h,
            Err(_) if opts.lenient => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(bad(e.to_string())),
        };
        let location = &rec[c_loc];
        if location.is_empty() {
            return Err(bad("empty location".into()));
        }
        let level = normalize_level(&rec[c_id]).ok_or_else(|| IoError::NonCanonicalLevel {
            row,
            level: rec[c_id].to_string(),
        })?;
        let value: f64 = rec[c_val]
            .parse()
            .map_err(|_| bad(format!("invalid value '{}'", &rec[c_val])))?;
        if !value.is_finite() || value < 0.0 {
            return Err(bad(format!("value {value} is not a non-negative count")));
        }
        let task = TaskKey::new(date, location, horizon);
        let entry = tasks.entry(task.clone()).or_insert(TaskRows {
            first_row: row,
            values: [None; N_QUANTILES],
        });
        let slot = &mut entry.values[level_index(level)];
        if slot.is_some() {
            return Err(IoError::DuplicateRow {
                row,
                task: task.to_string(),
                level: level.to_string(),
            });
        }
        *slot = Some((value, row));
    }
    if skipped > 0 {
        log::warn!("{model_id}: skipped {skipped} rows outside the quantile task range");
    }
    if targets.len() > 1 {
        return Err(IoError::MultipleTargets(
            targets.into_iter().collect::<Vec<_>>().join(", "),
        ));
    }
    let target = targets.into_iter().next().ok_or(IoError::Empty)?;

    let mut forecasts = BTreeMap::new();
    for (task, rows) in tasks {
        let found = rows.values.iter().filter(|v| v.is_some()).count();
        if found != N_QUANTILES {
            return Err(IoError::IncompleteQuantileSet {
                row: rows.first_row,
                task: task.to_string(),
                found,
            });
        }
        let pairs: Vec<(f64, u64)> = rows.values.iter().map(|v| v.expect("complete")).collect();
        for (j, w) in pairs.windows(2).enumerate() {
            if w[1].0 < w[0].0 {
                return Err(IoError::QuantileCrossing {
                    row: w[1].1,
                    task: task.to_string(),
                    level: CANONICAL_LEVEL_LITERALS[j + 1].to_string(),
                });
            }
        }
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let f = QuantileForecast::new(task.clone(), &values)?;
        forecasts.insert(task, f);
    }
    Ok(SubmissionFile {
        model_id: model_id.to_string(),
        target,
        forecasts,
    })
}

/// Canonical CSV: the seven columns in order, rows by reference date,
/// location, horizon and level, LF line endings.
pub fn emit_submission(file: &SubmissionFile) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(SUBMISSION_COLUMNS).expect("in-memory write");
    for (task, f) in &file.forecasts {
        let date = task.reference_date.to_string();
        let h = task.horizon.weeks().to_string();
        for (lit, v) in CANONICAL_LEVEL_LITERALS.iter().zip(f.values()) {
            w.write_record([
                date.as_str(),
                file.target.as_str(),
                h.as_str(),
                task.location.as_str(),
                "quantile",
                lit,
                &v.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
