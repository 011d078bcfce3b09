use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate};
use hubscore::forecasters::{FlatLineParams, Forecaster, ForecasterConfig};
use hubscore::io::{emit_submission, SubmissionFile};
use hubscore::model::saturdays_between;
use hubscore::{Dataset, Horizon, Location, LocationTable, ObservationSeries, QuantileForecast, TaskKey};
use tempfile::TempDir;

const LOCATIONS: [(&str, &str, u64); 3] = [("01", "Alpha", 5_000_000), ("02", "Beta", 700_000), ("US", "All", 300_000_000)];

fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn truth_value(loc: usize, date: NaiveDate) -> f64 {
    // Winter peak each season plus a small deterministic wobble.
    let season_week = ((date - d("2022-07-30")).num_weeks() % 52) as f64;
    let scale = [1.0, 0.3, 8.0][loc];
    let wobble = ((date - d("2022-01-01")).num_days() / 7 * 7 % 13) as f64;
    (scale * (40.0 + 500.0 * (-(season_week - 22.0).powi(2) / 40.0).exp()) + wobble).round()
}

struct Hub {
    dir: TempDir,
    data: Dataset,
}

impl Hub {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let dates = saturdays_between(d("2022-10-01"), d("2026-05-02"));
        let mut targets = String::from("date,location,value\n");
        let mut series = Vec::new();
        for (i, (code, _, _)) in LOCATIONS.iter().enumerate() {
            let values: Vec<f64> = dates.iter().map(|&t| truth_value(i, t)).collect();
            for (t, v) in dates.iter().zip(&values) {
                targets.push_str(&format!("{t},{code},{v}\n"));
            }
            series.push(ObservationSeries::from_values(*code, dates[0], &values).unwrap());
        }
        let mut locs = String::from("location,location_name,population\n");
        for (code, name, pop) in LOCATIONS {
            locs.push_str(&format!("{code},{name},{pop}\n"));
        }
        fs::write(dir.path().join("targets.csv"), targets).unwrap();
        fs::write(dir.path().join("locations.csv"), locs).unwrap();
        fs::create_dir(dir.path().join("submissions")).unwrap();
        let table = LocationTable::new(LOCATIONS.iter().map(|(c, n, p)| Location::new(*c, *n, *p).unwrap())).unwrap();
        Hub {
            dir,
            data: Dataset::new(table, series),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn tasks(&self) -> Vec<TaskKey> {
        let mut out = Vec::new();
        for date in saturdays_between(d("2025-11-22"), d("2026-01-31")) {
            for (code, _, _) in LOCATIONS {
                for h in Horizon::all() {
                    out.push(TaskKey::new(date, code, h));
                }
            }
        }
        out
    }

    fn submit(&self, model: &str, forecasts: Vec<QuantileForecast>) -> PathBuf {
        let file = SubmissionFile {
            model_id: model.into(),
            target: "wk inc flu hosp".into(),
            forecasts: forecasts.into_iter().map(|f| (f.task().clone(), f)).collect(),
        };
        let path = self.path("submissions").join(format!("2025-11-22-{model}.csv"));
        fs::write(&path, emit_submission(&file)).unwrap();
        path
    }

    fn oracle(&self) -> Vec<QuantileForecast> {
        self.tasks()
            .into_iter()
            .map(|t| {
                let y = self.data.truth(&t).unwrap();
                QuantileForecast::point_mass(t, y).unwrap()
            })
            .collect()
    }

    fn flatline(&self) -> Vec<QuantileForecast> {
        let cfg = ForecasterConfig::FlatLine(FlatLineParams {
            n_samples: 1000,
            ..FlatLineParams::default()
        });
        cfg.forecast(&self.data.truncated(d("2026-01-31") - Duration::weeks(1)), &self.tasks())
            .unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hubscore"));
        cmd.args(args)
            .arg("--targets")
            .arg(self.path("targets.csv"))
            .arg("--locations")
            .arg(self.path("locations.csv"))
            .arg("--submissions")
            .arg(self.path("submissions"))
            .arg("--out")
            .arg(self.path("out"));
        cmd.output().unwrap()
    }

    fn report(&self, name: &str) -> String {
        fs::read_to_string(self.path("out").join(name)).unwrap()
    }
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn identical_submissions_have_unit_relatives() {
    let hub = Hub::new();
    let f = hub.flatline();
    hub.submit("team-a", f.clone());
    hub.submit("team-b", f);
    let o = hub.run(&["leaderboard", "--baseline", "team-a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lb = rows(&hub.report("leaderboard.csv"));
    assert_eq!(lb.len(), 2);
    for r in &lb {
        assert_eq!(r[4], "1.0000", "{r:?}");
        assert_eq!(r[5], "true");
    }
    let raw = rows(&hub.report("leaderboard_raw.csv"));
    assert!(raw.iter().all(|r| r[3] == "1"));
}

#[test]
fn oracle_beats_flatline_everywhere() {
    let hub = Hub::new();
    hub.submit("oracle", hub.oracle());
    hub.submit("flat-baseline", hub.flatline());
    let o = hub.run(&["ranks"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ranks = rows(&hub.report("ranks.csv"));
    let oracle: Vec<_> = ranks.iter().filter(|r| r[0] == "oracle").collect();
    assert_eq!(oracle.len(), hub.tasks().len());
    assert!(oracle.iter().all(|r| r[4] == "1.0000"));

    let o = hub.run(&["leaderboard"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lb = rows(&hub.report("leaderboard.csv"));
    assert_eq!(lb[0][1], "oracle");
    assert_eq!(lb[0][3], "0.00");
    let flat = lb.iter().find(|r| r[1] == "flat-baseline").unwrap();
    assert_eq!(flat[4], "1.0000");
}

#[test]
fn validate_reports_each_file() {
    let hub = Hub::new();
    let good_a = hub.submit("a", hub.flatline());
    let good_b = hub.submit("b", hub.oracle());
    let text = fs::read_to_string(&good_a).unwrap();
    // Swap the values of the 0.01 and 0.025 rows of the first task.
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut first: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    let mut second: Vec<String> = lines[2].split(',').map(str::to_string).collect();
    first[6] = "100".into();
    second[6] = "1".into();
    lines[1] = first.join(",");
    lines[2] = second.join(",");
    let bad = hub.path("2025-11-22-bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();

    let o = Command::new(env!("CARGO_BIN_EXE_hubscore"))
        .arg("validate")
        .args([&good_a, &bad, &good_b])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().filter(|l| l.starts_with("ok\t")).count(), 2, "{err}");
    let line = err.lines().find(|l| l.starts_with("error\t")).unwrap();
    assert!(line.contains("row 3") && line.contains("crossing"), "{line}");

    let o = Command::new(env!("CARGO_BIN_EXE_hubscore"))
        .args(["validate"])
        .arg(&good_a)
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn search_trajectory_respects_budget_and_is_deterministic() {
    let hub = Hub::new();
    let args = [
        "search",
        "--validation",
        "2025-11-22..2025-12-20",
        "--test",
        "2026-01-03..2026-01-24",
        "--max_nodes",
        "50",
        "--n_samples",
        "500",
        "--n_trajectories",
        "500",
        "--seed",
        "7",
    ];
    let o = hub.run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = hub.report("trajectory.csv");
    let body = rows(&traj);
    assert!(!body.is_empty() && body.len() <= 50);
    let best: Vec<f64> = body.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    let selection = hub.report("selection.csv");
    let config = hub.report("best_config.ini");
    assert!(config.contains("[forecaster]") && config.contains("kind = "));

    let o = hub.run(&args);
    assert!(o.status.success());
    assert_eq!(hub.report("trajectory.csv"), traj);
    assert_eq!(hub.report("selection.csv"), selection);
    assert_eq!(hub.report("best_config.ini"), config);
}

#[test]
fn backtest_reports_each_family() {
    let hub = Hub::new();
    let o = hub.run(&[
        "backtest",
        "--validation",
        "2025-11-22..2025-12-13",
        "--test",
        "2026-01-03..2026-01-17",
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bt = rows(&hub.report("backtest.csv"));
    let mut names: Vec<&str> = bt.iter().map(|r| r[0].as_str()).collect();
    names.sort();
    assert_eq!(names, ["ar6_pooled", "climatological", "flatline"]);
    for r in &bt {
        let (v, t, s): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((s - (v + 2.0 * t)).abs() < 0.02, "{r:?}");
    }
}

#[test]
fn ensemble_of_identical_members_reproduces_them() {
    let hub = Hub::new();
    let member = hub.submit("m1", hub.flatline());
    hub.submit("m2", hub.flatline());
    let o = hub.run(&["ensemble", "--ensemble_id", "hub-ensemble"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ens = hub.report("hub-ensemble.csv");
    assert_eq!(ens, fs::read_to_string(member).unwrap());
}

fn digest(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.push((p.clone(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn commands_leave_inputs_untouched_and_are_repeatable() {
    let hub = Hub::new();
    hub.submit("oracle", hub.oracle());
    hub.submit("flat-baseline", hub.flatline());
    let before = (digest(hub.dir.path()), digest(&hub.path("submissions")));
    for cmd in ["score", "leaderboard", "ranks", "ensemble"] {
        let o = hub.run(&[cmd]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let first = digest(&hub.path("out"));
    for cmd in ["score", "leaderboard", "ranks", "ensemble"] {
        assert!(hub.run(&[cmd, "--sequential", "true"]).status.success());
    }
    assert_eq!(digest(&hub.path("out")), first);
    assert_eq!((digest(hub.dir.path()), digest(&hub.path("submissions"))), before);
}

#[test]
fn exit_codes_separate_usage_data_and_success() {
    let hub = Hub::new();
    hub.submit("flat-baseline", hub.flatline());
    let o = hub.run(&["leaderboard", "--threshold", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = hub.run(&["leaderboard", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    let o = hub.run(&["leaderboard", "--baseline", "missing-model"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");
    assert!(msg.starts_with("error: "));

    fs::write(hub.path("targets.csv"), "date,location,value\n2025-01-04,99,1\n").unwrap();
    let o = hub.run(&["score"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown location"));
}
