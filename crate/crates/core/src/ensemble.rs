//! Quantile ensembles built level by level from member forecasts.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{ModelError, QuantileForecast, TaskKey, N_QUANTILES};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("ensemble needs at least one member")]
    NoMembers,
    #[error("duplicate ensemble member {0}")]
    DuplicateMember(String),
    #[error("missing member forecasts: {}", .0.join(", "))]
    MissingMembers(Vec<String>),
    #[error("only {present} of the required {required} members are present")]
    TooFewMembers { present: usize, required: usize },
    #[error("member {member} forecasts task {found}, expected {expected}")]
    TaskMismatch {
        member: String,
        expected: TaskKey,
        found: TaskKey,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combiner {
    #[default]
    MeanPerQuantile,
    MedianPerQuantile,
}

impl std::str::FromStr for Combiner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "mean_per_quantile" => Ok(Combiner::MeanPerQuantile),
            "median" | "median_per_quantile" => Ok(Combiner::MedianPerQuantile),
            other => Err(format!("unknown combiner {other:?}")),
        }
    }
}

impl Combiner {
    pub fn as_str(self) -> &'static str {
        match self {
            Combiner::MeanPerQuantile => "mean",
            Combiner::MedianPerQuantile => "median",
        }
    }
}

/// What to do when a member has no forecast for a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    RequireAll,
    SkipIfMissing { min_members: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    members: Vec<String>,
    pub combiner: Combiner,
    pub missing: MissingPolicy,
}

impl EnsembleSpec {
    pub fn new(members: Vec<String>, combiner: Combiner) -> Result<Self, EnsembleError> {
        if members.is_empty() {
            return Err(EnsembleError::NoMembers);
        }
        let mut seen = BTreeSet::new();
        for m in &members {
            if !seen.insert(m) {
                return Err(EnsembleError::DuplicateMember(m.clone()));
            }
        }
        Ok(Self {
            members,
            combiner,
            missing: MissingPolicy::RequireAll,
        })
    }

    pub fn with_missing_policy(mut self, policy: MissingPolicy) -> Self {
        self.missing = policy;
        self
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }
}

/// Ascending sort; the identity on already monotone input.
pub fn repair_monotone(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// Per-level mean or median of the member vectors, without repair or
/// clamping.
pub fn combine_values(combiner: Combiner, members: &[&[f64; N_QUANTILES]]) -> [f64; N_QUANTILES] {
    let mut out = [0.0; N_QUANTILES];
    let mut column = Vec::with_capacity(members.len());
    for (k, slot) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(members.iter().map(|m| m[k]));
        *slot = match combiner {
            Combiner::MeanPerQuantile => stats::mean(&column),
            Combiner::MedianPerQuantile => stats::median(&column),
        };
    }
    out
}

/// Combines member forecasts for one task, then repairs crossings and
/// clamps at zero.
pub fn combine(
    spec: &EnsembleSpec,
    forecasts: &BTreeMap<String, QuantileForecast>,
) -> Result<QuantileForecast, EnsembleError> {
    let missing: Vec<String> = spec
        .members
        .iter()
        .filter(|m| !forecasts.contains_key(*m))
        .cloned()
        .collect();
    match spec.missing {
        MissingPolicy::RequireAll if !missing.is_empty() => {
            return Err(EnsembleError::MissingMembers(missing));
        }
        MissingPolicy::SkipIfMissing { min_members } => {
            let present = spec.members.len() - missing.len();
            if present < min_members.max(1) {
                return Err(EnsembleError::TooFewMembers {
                    present,
                    required: min_members.max(1),
                });
            }
        }
        _ => {}
    }
    let present: Vec<(&String, &QuantileForecast)> = spec
        .members
        .iter()
        .filter_map(|m| forecasts.get(m).map(|f| (m, f)))
        .collect();
    let task = present[0].1.task().clone();
    for (m, f) in &present {
        if f.task() != &task {
            return Err(EnsembleError::TaskMismatch {
                member: (*m).clone(),
                expected: task,
                found: f.task().clone(),
            });
        }
    }
    let vectors: Vec<&[f64; N_QUANTILES]> = present.iter().map(|(_, f)| f.values()).collect();
    let raw = combine_values(spec.combiner, &vectors);
    let repaired: Vec<f64> = repair_monotone(&raw).into_iter().map(|v| v.max(0.0)).collect();
    Ok(QuantileForecast::new(task, &repaired)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Horizon;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn task() -> TaskKey {
        TaskKey::new(NaiveDate::from_ymd_opt(2026, 1, 3).unwrap(), "01", Horizon::new(1).unwrap())
    }

    fn fc(values: &[f64]) -> QuantileForecast {
        QuantileForecast::new(task(), values).unwrap()
    }

    fn ramp(offset: f64, step: f64) -> Vec<f64> {
        (0..N_QUANTILES).map(|i| offset + step * i as f64).collect()
    }

    fn members(pairs: Vec<(&str, QuantileForecast)>) -> BTreeMap<String, QuantileForecast> {
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn spec_validation() {
        assert_eq!(EnsembleSpec::new(vec![], Combiner::MeanPerQuantile).unwrap_err(), EnsembleError::NoMembers);
        assert!(EnsembleSpec::new(vec!["a".into(), "a".into()], Combiner::MeanPerQuantile).is_err());
    }

    #[test]
    fn identical_members_reproduce_input() {
        let f = fc(&ramp(3.0, 1.5));
        let m = members(vec![("a", f.clone()), ("b", f.clone()), ("c", f.clone())]);
        for comb in [Combiner::MeanPerQuantile, Combiner::MedianPerQuantile] {
            let spec = EnsembleSpec::new(vec!["a".into(), "b".into(), "c".into()], comb).unwrap();
            assert_eq!(combine(&spec, &m).unwrap(), f);
        }
    }

    #[test]
    fn two_member_median_level() {
        let m = members(vec![("a", fc(&[10.0; 23])), ("b", fc(&[20.0; 23]))]);
        for comb in [Combiner::MeanPerQuantile, Combiner::MedianPerQuantile] {
            let spec = EnsembleSpec::new(vec!["a".into(), "b".into()], comb).unwrap();
            assert_eq!(combine(&spec, &m).unwrap().median(), 15.0);
        }
    }

    #[test]
    fn crossing_means_are_sort_repaired() {
        // Per-level means of monotone members never cross, so the crossing
        // case is built from raw vectors.
        let a: [f64; 23] = std::array::from_fn(|i| if i % 2 == 0 { 10.0 } else { 40.0 });
        let b: [f64; 23] = std::array::from_fn(|i| 30.0 - i as f64);
        let c: [f64; 23] = std::array::from_fn(|i| (i * i) as f64 * 0.1);
        let raw = combine_values(Combiner::MeanPerQuantile, &[&a, &b, &c]);
        assert!(raw.windows(2).any(|w| w[0] > w[1]));
        let mut oracle: Vec<f64> = (0..23).map(|k| (a[k] + b[k] + c[k]) / 3.0).collect();
        for i in 1..oracle.len() {
            let mut j = i;
            while j > 0 && oracle[j - 1] > oracle[j] {
                oracle.swap(j - 1, j);
                j -= 1;
            }
        }
        let repaired = repair_monotone(&raw);
        for (r, o) in repaired.iter().zip(&oracle) {
            assert!((r - o).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_mean_crossing_is_repaired() {
        let raw: [f64; 23] = {
            let mut v = ramp(0.0, 1.0);
            v.swap(5, 9);
            v.try_into().unwrap()
        };
        let repaired = repair_monotone(&raw);
        assert!(repaired.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(repaired, ramp(0.0, 1.0));
    }

    #[test]
    fn missing_member_policies() {
        let m = members(vec![("a", fc(&[1.0; 23]))]);
        let spec = EnsembleSpec::new(vec!["a".into(), "b".into()], Combiner::MeanPerQuantile).unwrap();
        assert_eq!(combine(&spec, &m).unwrap_err(), EnsembleError::MissingMembers(vec!["b".into()]));
        let skip = spec.clone().with_missing_policy(MissingPolicy::SkipIfMissing { min_members: 1 });
        assert_eq!(combine(&skip, &m).unwrap().median(), 1.0);
        let strict = spec.with_missing_policy(MissingPolicy::SkipIfMissing { min_members: 2 });
        assert!(matches!(combine(&strict, &m), Err(EnsembleError::TooFewMembers { .. })));
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let other = TaskKey::new(NaiveDate::from_ymd_opt(2026, 1, 10).unwrap(), "01", Horizon::new(1).unwrap());
        let m = members(vec![("a", fc(&[1.0; 23])), ("b", fc(&[1.0; 23]).with_task(other))]);
        let spec = EnsembleSpec::new(vec!["a".into(), "b".into()], Combiner::MeanPerQuantile).unwrap();
        assert!(matches!(combine(&spec, &m), Err(EnsembleError::TaskMismatch { .. })));
    }

    fn arb_vector() -> impl Strategy<Value = [f64; 23]> {
        proptest::collection::vec(0.0f64..100.0, 23).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            v.try_into().unwrap()
        })
    }

    proptest! {
        #[test]
        fn repair_is_idempotent(v in proptest::collection::vec(-100.0f64..100.0, 23)) {
            let once = repair_monotone(&v);
            prop_assert_eq!(repair_monotone(&once), once.clone());
            prop_assert!(once.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn single_member_is_identity(v in arb_vector()) {
            let f = fc(&v);
            let spec = EnsembleSpec::new(vec!["only".into()], Combiner::MedianPerQuantile).unwrap();
            prop_assert_eq!(combine(&spec, &members(vec![("only", f.clone())])).unwrap(), f);
        }

        #[test]
        fn mean_is_affine_equivariant(
            vs in proptest::collection::vec(arb_vector(), 1..5),
            c in 0.1f64..10.0,
            d in -50.0f64..50.0,
        ) {
            let refs: Vec<&[f64; 23]> = vs.iter().collect();
            let base = combine_values(Combiner::MeanPerQuantile, &refs);
            let moved: Vec<[f64; 23]> = vs.iter().map(|v| v.map(|x| c * x + d)).collect();
            let moved_refs: Vec<&[f64; 23]> = moved.iter().collect();
            let out = combine_values(Combiner::MeanPerQuantile, &moved_refs);
            for k in 0..23 {
                prop_assert!((out[k] - (c * base[k] + d)).abs() < 1e-9 * (1.0 + out[k].abs()));
            }
        }

        #[test]
        fn median_stable_under_duplication(
            vs in proptest::collection::vec(arb_vector(), 1..4),
            which in 0usize..4,
            copies in 1usize..3,
            reps in 2usize..4,
        ) {
            let mut odd = vs.clone();
            if odd.len() % 2 == 0 {
                odd.push(odd[0]);
            }
            let refs: Vec<&[f64; 23]> = odd.iter().collect();
            let base = combine_values(Combiner::MedianPerQuantile, &refs);

            // Duplicating a single member 2k times keeps every level whose
            // median that member already attains.
            let pick = odd[which % odd.len()];
            let mut dup = odd.clone();
            for _ in 0..2 * copies {
                dup.push(pick);
            }
            let dup_refs: Vec<&[f64; 23]> = dup.iter().collect();
            let out = combine_values(Combiner::MedianPerQuantile, &dup_refs);
            for k in 0..23 {
                if pick[k] == base[k] {
                    prop_assert_eq!(out[k], base[k]);
                }
            }

            // Repeating every member the same number of times changes nothing.
            let all: Vec<[f64; 23]> = odd.iter().flat_map(|m| std::iter::repeat_n(*m, reps)).collect();
            let all_refs: Vec<&[f64; 23]> = all.iter().collect();
            prop_assert_eq!(combine_values(Combiner::MedianPerQuantile, &all_refs), base);
        }
    }
}
