use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use hubscore::forecasters::ForecasterConfig;
use hubscore::io::{self, report, ParseOptions, SubmissionFile};
use hubscore::leaderboard::{horizon_breakdown, leaderboard, standardized_ranks};
use hubscore::model::saturdays_between;
use hubscore::pipeline::{
    ensemble_submissions, merge_submissions, score_submissions, submitted_task_space,
    task_space_with_truth,
};
use hubscore::selection_search::{
    rolling_validation_score, run_search, select_final_node, BacktestOptions, Budget,
    EvaluationSplit, Gate, MutationProposer, RollingEvaluator, SearchOptions,
};
use hubscore::{Dataset, TaskKey};

use crate::config::{forecaster_section, RunConfig};
use crate::failure::{Failure, Tag};

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, Failure> {
    path.as_deref()
        .ok_or_else(|| Failure::usage(format!("--{key} (or `{key}` in the config) is required")))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).data(format!("reading {}", path.display()))
}

fn write_report(cfg: &RunConfig, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(&cfg.out).data(format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join(name);
    fs::write(&path, contents).data(format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Model id from a hub file name: `2025-11-22-team-model.csv` → `team-model`.
pub fn model_id_from_path(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let b = stem.as_bytes();
    let dated = b.len() > 11
        && b[10] == b'-'
        && stem[..10].parse::<chrono::NaiveDate>().is_ok();
    if dated {
        stem[11..].to_string()
    } else {
        stem
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).data(format!("listing {}", dir.display()))? {
        out.push(entry.data(format!("listing {}", dir.display()))?.path());
    }
    out.sort();
    Ok(out)
}

/// Submission files grouped by model id. Sub-directories name their model;
/// loose files are named by their stem.
pub fn discover_submissions(dir: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>, Failure> {
    let mut by_model: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for path in sorted_entries(dir)? {
        if path.is_dir() {
            let model = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            for file in sorted_entries(&path)?.into_iter().filter(|p| is_csv(p)) {
                by_model.entry(model.clone()).or_default().push(file);
            }
        } else if is_csv(&path) {
            by_model.entry(model_id_from_path(&path)).or_default().push(path);
        }
    }
    if by_model.is_empty() {
        return Err(Failure::data(format!("no submission CSVs under {}", dir.display())));
    }
    Ok(by_model)
}

fn load_submissions(cfg: &RunConfig) -> Result<Vec<SubmissionFile>, Failure> {
    let dir = required(&cfg.submissions, "submissions")?;
    let opts = ParseOptions {
        target: cfg.target.clone(),
        lenient: cfg.lenient,
    };
    let mut subs = Vec::new();
    for (model, files) in discover_submissions(dir)? {
        let mut parts = Vec::with_capacity(files.len());
        for f in files {
            parts.push(
                io::parse_submission(&read(&f)?, &model, &opts)
                    .data(format!("{}", f.display()))?,
            );
        }
        subs.push(merge_submissions(parts).data(format!("model {model}"))?);
    }
    let target = &subs[0].target;
    if let Some(other) = subs.iter().find(|s| s.target != *target) {
        return Err(Failure::data(format!(
            "models {} and {} forecast different targets ({target} vs {}); choose one with --target",
            subs[0].model_id, other.model_id, other.target
        )));
    }
    Ok(subs)
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, Failure> {
    let loc_path = required(&cfg.locations, "locations")?;
    let tgt_path = required(&cfg.targets, "targets")?;
    let table = io::load_locations(&read(loc_path)?).data(format!("{}", loc_path.display()))?;
    let load =
        io::load_target_series(&read(tgt_path)?, &table).data(format!("{}", tgt_path.display()))?;
    Ok(Dataset::new(table, load.series))
}

fn check_locations(subs: &[SubmissionFile], data: &Dataset) -> Result<(), Failure> {
    for s in subs {
        if let Some(t) = s.tasks().find(|t| !data.locations.contains(&t.location)) {
            return Err(Failure::data(format!(
                "model {}: unknown location '{}'",
                s.model_id, t.location
            )));
        }
    }
    Ok(())
}

fn task_space(cfg: &RunConfig, subs: &[SubmissionFile], data: &Dataset) -> Result<Vec<TaskKey>, Failure> {
    let space = match (cfg.task_start, cfg.task_end) {
        (Some(a), Some(b)) => {
            let codes: Vec<String> = data.locations.codes().map(str::to_string).collect();
            task_space_with_truth(&saturdays_between(a, b), &codes, &cfg.horizons, data)
                .data("task space")?
        }
        (None, None) => submitted_task_space(subs, data)
            .into_iter()
            .filter(|t| cfg.horizons.contains(&t.horizon))
            .collect(),
        _ => return Err(Failure::usage("task_start and task_end go together")),
    };
    if space.is_empty() {
        return Err(Failure::data("task space is empty: no submitted task has truth"));
    }
    Ok(space)
}

struct Scored {
    subs: Vec<SubmissionFile>,
    space: Vec<TaskKey>,
    table: hubscore::leaderboard::ScoreTable,
}

fn score_all(cfg: &RunConfig) -> Result<Scored, Failure> {
    let data = load_dataset(cfg)?;
    let subs = load_submissions(cfg)?;
    check_locations(&subs, &data)?;
    let space = task_space(cfg, &subs, &data)?;
    let table = score_submissions(&subs, &data, &[cfg.metric], &space, cfg.execution())
        .data("scoring")?;
    Ok(Scored { subs, space, table })
}

/// Validates each file independently; one diagnostic line per file.
pub fn validate(cfg: &RunConfig, files: &[PathBuf]) -> Result<(), Failure> {
    let locations = match &cfg.locations {
        Some(p) => Some(io::load_locations(&read(p)?).data(format!("{}", p.display()))?),
        None => None,
    };
    let opts = ParseOptions {
        target: cfg.target.clone(),
        lenient: cfg.lenient,
    };
    let mut bad = 0usize;
    for f in files {
        let checked = fs::read(f)
            .map_err(|e| e.to_string())
            .and_then(|bytes| {
                io::parse_submission(&bytes, &model_id_from_path(f), &opts).map_err(|e| e.to_string())
            })
            .and_then(|sub| match locations.as_ref().and_then(|t| {
                sub.tasks().find(|task| !t.contains(&task.location))
            }) {
                Some(task) => Err(format!("unknown location '{}'", task.location)),
                None => Ok(sub),
            });
        match checked {
            Ok(sub) => eprintln!(
                "ok\t{}\tmodel={}\ttarget={}\ttasks={}",
                f.display(),
                sub.model_id,
                sub.target,
                sub.forecasts.len()
            ),
            Err(msg) => {
                bad += 1;
                eprintln!("error\t{}\t{}", f.display(), msg.replace(['\n', '\t'], " "));
            }
        }
    }
    if bad > 0 {
        return Err(Failure::data(format!("{bad} of {} files failed validation", files.len())));
    }
    Ok(())
}

pub fn score(cfg: &RunConfig) -> Result<(), Failure> {
    let scored = score_all(cfg)?;
    let records: Vec<_> = scored.table.records().collect();
    write_report(cfg, "scores.csv", &report::emit_scores(&records))
}

fn resolve_baseline(cfg: &RunConfig, subs: &[SubmissionFile]) -> Result<String, Failure> {
    if let Some(b) = &cfg.baseline {
        return Ok(b.clone());
    }
    let guesses: Vec<&str> = subs
        .iter()
        .map(|s| s.model_id.as_str())
        .filter(|m| m.to_ascii_lowercase().ends_with("baseline"))
        .collect();
    match guesses.as_slice() {
        [one] => {
            log::info!("using {one} as baseline");
            Ok(one.to_string())
        }
        _ => Err(Failure::usage("--baseline is required (no unique *baseline model found)")),
    }
}

pub fn leaderboard_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let scored = score_all(cfg)?;
    let baseline = resolve_baseline(cfg, &scored.subs)?;
    let rows = leaderboard(&scored.table, &scored.space, cfg.metric, &baseline, cfg.threshold)
        .data("leaderboard")?;
    write_report(cfg, "leaderboard.csv", &report::emit_leaderboard(&rows, cfg.metric))?;
    write_report(cfg, "leaderboard_raw.csv", &report::emit_leaderboard_raw(&rows, cfg.metric))
}

pub fn ranks(cfg: &RunConfig) -> Result<(), Failure> {
    let scored = score_all(cfg)?;
    let ranks = standardized_ranks(&scored.table, cfg.metric);
    write_report(cfg, "ranks.csv", &report::emit_ranks(&ranks))?;
    write_report(cfg, "rank_summary.csv", &report::emit_rank_summary(&ranks))?;
    let horizons = horizon_breakdown(&scored.table, cfg.metric);
    write_report(cfg, "horizons.csv", &report::emit_horizon_table(&horizons, cfg.metric))
}

pub fn ensemble(cfg: &RunConfig) -> Result<(), Failure> {
    let subs = load_submissions(cfg)?;
    let available: Vec<String> = subs
        .iter()
        .map(|s| s.model_id.clone())
        .filter(|m| *m != cfg.ensemble_id)
        .collect();
    let spec = cfg.ensemble_spec(&available)?;
    if let Some(m) = spec.members().iter().find(|m| !available.contains(m)) {
        return Err(Failure::data(format!("ensemble member '{m}' has no submission")));
    }
    let ens = ensemble_submissions(&spec, &subs, &cfg.ensemble_id).data("ensemble")?;
    write_report(cfg, &format!("{}.csv", cfg.ensemble_id), &io::emit_submission(&ens))
}

fn split(cfg: &RunConfig) -> Result<EvaluationSplit, Failure> {
    let test = cfg
        .test
        .ok_or_else(|| Failure::usage("--test (retrospective test block) is required"))?;
    EvaluationSplit::new(cfg.validation.clone(), test, cfg.prospective).usage("split")
}

fn backtest_options(cfg: &RunConfig) -> BacktestOptions {
    BacktestOptions {
        metric: cfg.metric,
        horizons: cfg.horizons.clone(),
        data_lag_weeks: cfg.lag_weeks,
        exec: cfg.execution(),
    }
}

pub fn backtest(cfg: &RunConfig) -> Result<(), Failure> {
    let split = split(cfg)?;
    let data = load_dataset(cfg)?;
    let opts = backtest_options(cfg);
    let mut rows = Vec::new();
    for (name, f) in cfg.backtest_forecasters() {
        let v = rolling_validation_score(&f, &data, split.validation(), &opts)
            .data(format!("{name}: validation"))?;
        let t = rolling_validation_score(&f, &data, &[split.retrospective_test()], &opts)
            .data(format!("{name}: test"))?;
        rows.push((name, v, t, hubscore::selection_search::selection_score(v, t)));
    }
    write_report(cfg, "backtest.csv", &report::emit_backtest(&rows, cfg.metric))
}

/// Rejects configurations that fail their own parameter checks.
struct ValidConfig;

impl Gate for ValidConfig {
    fn passes(&self, config: &ForecasterConfig) -> bool {
        config.validate().is_ok()
    }
}

pub fn search(cfg: &RunConfig) -> Result<(), Failure> {
    let split = split(cfg)?;
    let data = load_dataset(cfg)?;
    let root = cfg.search_root();
    root.validate().usage("search root")?;
    let opts = backtest_options(cfg);
    let validation = RollingEvaluator {
        data: &data,
        ranges: split.validation().to_vec(),
        options: opts.clone(),
    };
    let proposer = MutationProposer {
        switch_kind_probability: cfg.switch_kind_probability,
    };
    let budget = Budget::new(cfg.max_nodes, Duration::from_secs_f64(cfg.max_runtime_secs))
        .usage("budget")?;
    let search_opts = SearchOptions {
        exploration: cfg.exploration,
        penalty: cfg.penalty,
        batch_size: cfg.batch_size,
        max_children: cfg.max_children,
        seed: cfg.seed,
        exec: cfg.execution(),
    };
    let outcome = run_search(root, &proposer, &validation, &ValidConfig, budget, &search_opts)
        .usage("search")?;
    let test = RollingEvaluator {
        data: &data,
        ranges: vec![split.retrospective_test()],
        options: opts,
    };
    let fin = select_final_node(&outcome.tree, &test, cfg.penalty, cfg.execution())
        .internal("final selection")?;
    write_report(cfg, "trajectory.csv", &report::emit_trajectory(&outcome.trajectory))?;
    write_report(cfg, "timing.csv", &report::emit_timing(&outcome.trajectory))?;
    write_report(cfg, "selection.csv", &report::emit_selection(&fin.table))?;
    let best = &outcome.tree.node(fin.chosen.node_id).config;
    let header = format!(
        "# node {} selection_score {}\n",
        fin.chosen.node_id,
        report::fixed(fin.chosen.selection, report::RELATIVE_DECIMALS)
    );
    write_report(cfg, "best_config.ini", &(header + &forecaster_section(best)))
}
