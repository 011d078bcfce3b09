//! Deterministic CSV reports.
//!
//! Column order and row order are fixed, numbers use fixed decimals, and
//! lines end in LF, so identical inputs give identical bytes.

use std::collections::BTreeMap;

use crate::leaderboard::LeaderboardRow;
use crate::model::{Horizon, TaskKey};
use crate::scoring::{Metric, ScoreRecord};
use crate::selection_search::{NodeSelection, TrajectoryRow};
use crate::stats::sorted_quantile;

pub const RELATIVE_DECIMALS: usize = 4;

/// Fixed-decimal rendering without a `-0` artefact.
pub fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn write<I, S>(w: &mut csv::Writer<Vec<u8>>, record: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(record).expect("in-memory write");
}

/// Leaderboard rows with a 1-based rank for models that have a relative
/// score. Sorted by rank, then model id; unranked rows last.
pub fn emit_leaderboard(rows: &[LeaderboardRow], metric: Metric) -> String {
    let m = metric.as_str();
    let mut w = writer();
    write(
        &mut w,
        [
            "rank".to_string(),
            "model_id".into(),
            "n_tasks".into(),
            format!("mean_{m}"),
            format!("relative_{m}"),
            "eligible".into(),
        ],
    );
    let mut sorted: Vec<&LeaderboardRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        let key = |r: &LeaderboardRow| r.pairwise_relative.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then_with(|| a.model_id.cmp(&b.model_id))
    });
    let mut rank = 0;
    for r in sorted {
        let rank_s = match r.pairwise_relative {
            Some(_) => {
                rank += 1;
                rank.to_string()
            }
            None => String::new(),
        };
        write(
            &mut w,
            [
                rank_s,
                r.model_id.clone(),
                r.n_tasks.to_string(),
                fixed(r.mean_score, metric.report_decimals()),
                r.pairwise_relative
                    .map_or_else(String::new, |v| fixed(v, RELATIVE_DECIMALS)),
                r.eligible.to_string(),
            ],
        );
    }
    finish(w)
}

/// Same rows at full round-trip precision, for downstream recomputation.
pub fn emit_leaderboard_raw(rows: &[LeaderboardRow], metric: Metric) -> String {
    let m = metric.as_str();
    let mut w = writer();
    write(
        &mut w,
        [
            "model_id".to_string(),
            "n_tasks".into(),
            format!("mean_{m}"),
            format!("relative_{m}"),
            "eligible".into(),
        ],
    );
    let mut sorted: Vec<&LeaderboardRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    for r in sorted {
        write(
            &mut w,
            [
                r.model_id.clone(),
                r.n_tasks.to_string(),
                r.mean_score.to_string(),
                r.pairwise_relative.map_or_else(String::new, |v| v.to_string()),
                r.eligible.to_string(),
            ],
        );
    }
    finish(w)
}

/// Per-task scores at full precision, ordered by model, metric and task.
pub fn emit_scores(records: &[ScoreRecord]) -> String {
    let mut sorted: Vec<&ScoreRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.model_id.as_str(), a.metric, &a.task).cmp(&(b.model_id.as_str(), b.metric, &b.task))
    });
    let mut w = writer();
    write(
        &mut w,
        ["model_id", "reference_date", "location", "horizon", "target_end_date", "metric", "value"],
    );
    for r in sorted {
        write(
            &mut w,
            [
                r.model_id.clone(),
                r.task.reference_date.to_string(),
                r.task.location.clone(),
                r.task.horizon.weeks().to_string(),
                r.task.target_end_date().to_string(),
                r.metric.as_str().to_string(),
                r.value.to_string(),
            ],
        );
    }
    finish(w)
}

/// Long-form standardized ranks, ordered by model then task.
pub fn emit_ranks(ranks: &BTreeMap<(String, TaskKey), f64>) -> String {
    let mut w = writer();
    write(&mut w, ["model_id", "reference_date", "location", "horizon", "standardized_rank"]);
    for ((model, task), r) in ranks {
        write(
            &mut w,
            [
                model.clone(),
                task.reference_date.to_string(),
                task.location.clone(),
                task.horizon.weeks().to_string(),
                fixed(*r, RELATIVE_DECIMALS),
            ],
        );
    }
    finish(w)
}

/// Per-model rank distribution summary, best mean rank first.
pub fn emit_rank_summary(ranks: &BTreeMap<(String, TaskKey), f64>) -> String {
    let mut by_model: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for ((model, _), r) in ranks {
        by_model.entry(model).or_default().push(*r);
    }
    let mut rows: Vec<(&str, usize, f64, f64, f64, f64)> = by_model
        .into_iter()
        .map(|(m, mut v)| {
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (
                m,
                v.len(),
                mean,
                sorted_quantile(&v, 0.25),
                sorted_quantile(&v, 0.5),
                sorted_quantile(&v, 0.75),
            )
        })
        .collect();
    rows.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(b.0)));
    let mut w = writer();
    write(&mut w, ["model_id", "n_tasks", "mean_rank", "q25_rank", "median_rank", "q75_rank"]);
    for (m, n, mean, q25, med, q75) in rows {
        write(
            &mut w,
            [
                m.to_string(),
                n.to_string(),
                fixed(mean, RELATIVE_DECIMALS),
                fixed(q25, RELATIVE_DECIMALS),
                fixed(med, RELATIVE_DECIMALS),
                fixed(q75, RELATIVE_DECIMALS),
            ],
        );
    }
    finish(w)
}

/// Mean score per model and horizon.
pub fn emit_horizon_table(table: &BTreeMap<(String, Horizon), f64>, metric: Metric) -> String {
    let mut w = writer();
    write(
        &mut w,
        ["model_id".to_string(), "horizon".into(), format!("mean_{}", metric.as_str())],
    );
    for ((model, h), v) in table {
        write(
            &mut w,
            [model.clone(), h.weeks().to_string(), fixed(*v, metric.report_decimals())],
        );
    }
    finish(w)
}

/// One row per backtested configuration, best selection score first.
pub fn emit_backtest(rows: &[(String, f64, f64, f64)], metric: Metric) -> String {
    let d = metric.report_decimals();
    let m = metric.as_str();
    let mut sorted: Vec<&(String, f64, f64, f64)> = rows.iter().collect();
    sorted.sort_by(|a, b| a.3.total_cmp(&b.3).then_with(|| a.0.cmp(&b.0)));
    let mut w = writer();
    write(
        &mut w,
        [
            "model_id".to_string(),
            format!("validation_{m}"),
            format!("test_{m}"),
            "selection_score".into(),
        ],
    );
    for (name, v, t, s) in sorted {
        write(&mut w, [name.clone(), fixed(*v, d), fixed(*t, d), fixed(*s, d)]);
    }
    finish(w)
}

/// Search trajectory in node order. Timing is kept out so the file is a
/// pure function of the inputs and seed; see [`emit_timing`].
pub fn emit_trajectory(rows: &[TrajectoryRow]) -> String {
    let mut w = writer();
    write(&mut w, ["node_id", "parent_id", "score", "cumulative_best", "gate_passed"]);
    for r in rows {
        write(
            &mut w,
            [
                r.node_id.to_string(),
                r.parent_id.map_or_else(String::new, |p| p.to_string()),
                fixed(r.score, RELATIVE_DECIMALS),
                fixed(r.cumulative_best, RELATIVE_DECIMALS),
                r.gate_passed.to_string(),
            ],
        );
    }
    finish(w)
}

/// Evaluation wall time per node in milliseconds.
pub fn emit_timing(rows: &[TrajectoryRow]) -> String {
    let mut w = writer();
    write(&mut w, ["node_id", "wall_ms"]);
    for r in rows {
        write(&mut w, [r.node_id.to_string(), fixed(r.wall_ms, 3)]);
    }
    finish(w)
}

/// Post-hoc selection table, in node order.
pub fn emit_selection(rows: &[NodeSelection]) -> String {
    let mut w = writer();
    write(&mut w, ["node_id", "validation", "test", "selection_score"]);
    for r in rows {
        write(
            &mut w,
            [
                r.node_id.to_string(),
                fixed(r.validation, RELATIVE_DECIMALS),
                fixed(r.test, RELATIVE_DECIMALS),
                fixed(r.selection, RELATIVE_DECIMALS),
            ],
        );
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, mean: f64, rel: Option<f64>) -> LeaderboardRow {
        LeaderboardRow {
            model_id: id.into(),
            n_tasks: 10,
            mean_score: mean,
            pairwise_relative: rel,
            eligible: rel.is_some(),
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(
            emit_leaderboard(&[], Metric::LogWis),
            "rank,model_id,n_tasks,mean_logwis,relative_logwis,eligible\n"
        );
        assert_eq!(emit_ranks(&BTreeMap::new()).lines().count(), 1);
        assert_eq!(emit_trajectory(&[]).lines().count(), 1);
    }

    #[test]
    fn fixed_formatting_and_order() {
        let rows = vec![
            row("zeta", 0.12345, Some(1.0)),
            row("alpha", 0.1, Some(0.978)),
            row("late", 0.3, None),
            row("beta", 0.2, Some(0.978)),
        ];
        let out = emit_leaderboard(&rows, Metric::LogWis);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[1], "1,alpha,10,0.1000,0.9780,true");
        assert_eq!(lines[2], "2,beta,10,0.2000,0.9780,true");
        assert_eq!(lines[3], "3,zeta,10,0.1235,1.0000,true");
        assert_eq!(lines[4], ",late,10,0.3000,,false");
        assert!(!out.contains('\r'));
        assert_eq!(out, emit_leaderboard(&rows, Metric::LogWis));

        let wis = emit_leaderboard(&rows, Metric::Wis);
        assert!(wis.lines().nth(1).unwrap().starts_with("1,alpha,10,0.10,0.9780"));
    }

    #[test]
    fn negative_zero_is_unsigned() {
        assert_eq!(fixed(-0.0001, 2), "0.00");
        assert_eq!(fixed(-0.5, 2), "-0.50");
        assert_eq!(fixed(93.156, 2), "93.16");
    }
}
