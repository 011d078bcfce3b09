//! Hub-format CSV ingestion and report emission.

use thiserror::Error;

use crate::model::ModelError;

pub mod report;
pub mod submission;
pub mod target;

pub use submission::{
    emit_submission, normalize_level, parse_submission, ParseOptions, SubmissionFile,
    SUBMISSION_COLUMNS,
};
pub use target::{load_locations, load_target_series, TargetLoad};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("row {row}: incomplete quantile set for {task} ({found} of 23 levels)")]
    IncompleteQuantileSet { row: u64, task: String, found: usize },
    #[error("row {row}: quantile crossing for {task} at level {level}")]
    QuantileCrossing { row: u64, task: String, level: String },
    #[error("row {row}: duplicate row for {task} at level {level}")]
    DuplicateRow { row: u64, task: String, level: String },
    #[error("row {row}: non-canonical quantile level '{level}'")]
    NonCanonicalLevel { row: u64, level: String },
    #[error("row {row}: unknown location '{code}'")]
    UnknownLocation { row: u64, code: String },
    #[error("file holds several targets ({0}); choose one")]
    MultipleTargets(String),
    #[error("no forecast rows")]
    Empty,
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        match e.position() {
            Some(p) => IoError::Row {
                row: p.line(),
                message: e.to_string(),
            },
            None => IoError::Csv(e.to_string()),
        }
    }
}

/// Position of each required column in `headers`.
pub(crate) fn column_indices<const N: usize>(
    headers: &csv::StringRecord,
    names: [&[&str]; N],
) -> Result<[usize; N], IoError> {
    let mut out = [0usize; N];
    for (slot, aliases) in out.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| aliases.contains(&h.trim()))
            .ok_or_else(|| IoError::MissingColumn(aliases[0].to_string()))?;
    }
    Ok(out)
}
