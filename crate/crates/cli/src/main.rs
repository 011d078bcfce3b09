//! `hubscore`: score, rank, ensemble, backtest and search forecast hub data.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{RunConfig, FORECASTER_KEYS, RUN_KEYS};
use failure::Failure;

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("score", "per-task scores for every submission (scores.csv)"),
    ("leaderboard", "mean and pairwise relative scores (leaderboard.csv, leaderboard_raw.csv)"),
    ("ranks", "standardized ranks and per-horizon means (ranks.csv, rank_summary.csv, horizons.csv)"),
    ("ensemble", "per-quantile ensemble of member submissions (<ensemble_id>.csv)"),
    ("backtest", "rolling-origin validation, test and selection scores (backtest.csv)"),
    ("search", "PUCT search over forecaster configurations (trajectory.csv, selection.csv, best_config.ini)"),
];

fn key_arg(key: &'static str, help: &'static str) -> Arg {
    let mut arg = Arg::new(key)
        .long(key)
        .value_name("VALUE")
        .help(help)
        .global(true)
        .action(ArgAction::Set);
    if key.contains('_') {
        arg = arg.alias(key.replace('_', "-"));
    }
    arg
}

fn cli() -> Command {
    let mut cmd = Command::new("hubscore")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Evaluate, rank and ensemble quantile forecasts of weekly counts")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .help("sectioned key = value run configuration")
                .global(true)
                .value_parser(clap::value_parser!(PathBuf)),
        );
    for (key, _, help) in RUN_KEYS {
        cmd = cmd.arg(key_arg(key, help));
    }
    for (key, help) in FORECASTER_KEYS {
        cmd = cmd.arg(key_arg(key, help).help_heading("Forecaster"));
    }
    cmd = cmd.subcommand(
        Command::new("validate")
            .about("check submission files; one ok/error line per file on stderr")
            .arg(
                Arg::new("files")
                    .required(true)
                    .num_args(1..)
                    .value_parser(clap::value_parser!(PathBuf)),
            ),
    );
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about));
    }
    cmd
}

fn build_config(m: &ArgMatches) -> Result<RunConfig, Failure> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    // Flags override the file. Seed goes first so later forecaster flags
    // act on seeded configurations.
    if let Some(v) = m.get_one::<String>("seed") {
        cfg.set("seed", v)?;
    }
    for (key, _, _) in RUN_KEYS.iter().filter(|(k, _, _)| *k != "seed") {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    if let Some(v) = m.get_one::<String>("kind") {
        cfg.set_forecaster_param("kind", v)?;
    }
    for (key, _) in FORECASTER_KEYS.iter().filter(|(k, _)| *k != "kind") {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set_forecaster_param(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(m: &ArgMatches) -> Result<(), Failure> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = build_config(sub)?;
    match name {
        "validate" => {
            let files: Vec<PathBuf> = sub.get_many::<PathBuf>("files").expect("required").cloned().collect();
            commands::validate(&cfg, &files)
        }
        "score" => commands::score(&cfg),
        "leaderboard" => commands::leaderboard_cmd(&cfg),
        "ranks" => commands::ranks(&cfg),
        "ensemble" => commands::ensemble(&cfg),
        "backtest" => commands::backtest(&cfg),
        "search" => commands::search(&cfg),
        other => Err(Failure::usage(format!("unknown subcommand {other}"))),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    std::panic::set_hook(Box::new(|info| {
        eprintln!("internal error: {}", info.to_string().replace('\n', " "));
    }));
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&matches)));
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
