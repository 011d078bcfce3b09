use std::fmt;

use chrono::NaiveDate;

use super::SearchError;
use crate::model::saturdays_between;

/// Inclusive span of reference dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, SearchError> {
        if start > end {
            return Err(SearchError::InvalidRange(format!("{start} is after {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Weekly origins: every Saturday in the range.
    pub fn origins(&self) -> Vec<NaiveDate> {
        saturdays_between(self.start, self.end)
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl std::str::FromStr for DateRange {
    type Err = SearchError;

    /// Parses `START..END` with ISO dates.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| SearchError::InvalidRange(format!("expected START..END, got '{s}'")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<NaiveDate>()
                .map_err(|e| SearchError::InvalidRange(format!("'{t}': {e}")))
        };
        DateRange::new(parse(a)?, parse(b)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSplit {
    validation: Vec<DateRange>,
    retrospective_test: DateRange,
    prospective: Option<DateRange>,
}

impl EvaluationSplit {
    pub fn new(
        validation: Vec<DateRange>,
        retrospective_test: DateRange,
        prospective: Option<DateRange>,
    ) -> Result<Self, SearchError> {
        if validation.is_empty() {
            return Err(SearchError::InvalidSplit("no validation range".into()));
        }
        let mut all: Vec<(&str, DateRange)> = validation.iter().map(|r| ("validation", *r)).collect();
        all.push(("retrospective test", retrospective_test));
        if let Some(p) = prospective {
            all.push(("prospective", p));
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i].1.overlaps(&all[j].1) {
                    return Err(SearchError::InvalidSplit(format!(
                        "{} range {} overlaps {} range {}",
                        all[i].0, all[i].1, all[j].0, all[j].1
                    )));
                }
            }
        }
        Ok(Self {
            validation,
            retrospective_test,
            prospective,
        })
    }

    pub fn validation(&self) -> &[DateRange] {
        &self.validation
    }

    pub fn retrospective_test(&self) -> DateRange {
        self.retrospective_test
    }

    pub fn prospective(&self) -> Option<DateRange> {
        self.prospective
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> DateRange {
        s.parse().unwrap()
    }

    #[test]
    fn ranges_parse_and_enumerate_saturdays() {
        let x = r("2025-11-22..2025-12-13");
        assert_eq!(x.origins().len(), 4);
        assert!("2025-12-13..2025-11-22".parse::<DateRange>().is_err());
        assert!("2025-12-13".parse::<DateRange>().is_err());
        assert_eq!(x.to_string(), "2025-11-22..2025-12-13");
    }

    #[test]
    fn split_rejects_overlap() {
        let ok = EvaluationSplit::new(
            vec![r("2025-01-04..2025-02-22"), r("2025-03-01..2025-03-29")],
            r("2025-04-05..2025-05-31"),
            Some(r("2025-11-22..2026-05-02")),
        );
        assert!(ok.is_ok());
        let bad = EvaluationSplit::new(
            vec![r("2025-01-04..2025-04-05")],
            r("2025-04-05..2025-05-31"),
            None,
        );
        assert!(matches!(bad, Err(SearchError::InvalidSplit(_))));
        let bad = EvaluationSplit::new(vec![], r("2025-04-05..2025-05-31"), None);
        assert!(bad.is_err());
    }
}
