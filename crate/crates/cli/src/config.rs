//! Run configuration: built-in defaults, then the config file, then flags.
//!
//! The file is sectioned `key = value` text. Section names only group keys,
//! except `[forecaster]` and `[forecaster.NAME]`, which each describe one
//! forecaster configuration. Every key can also be given as `--key VALUE`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use hubscore::ensemble::{Combiner, EnsembleSpec, MissingPolicy};
use hubscore::forecasters::{ForecasterConfig, ForecasterKind};
use hubscore::selection_search::DateRange;
use hubscore::{Execution, Horizon, Metric};
use ini::{Ini, ParseOption};

use crate::failure::{Failure, Tag};

/// Run keys, their section in a written config, and flag help.
pub const RUN_KEYS: &[(&str, &str, &str)] = &[
    ("targets", "paths", "truth CSV with date, location, value columns"),
    ("locations", "paths", "location table CSV with location, population columns"),
    ("submissions", "paths", "directory of hub-format submission CSVs"),
    ("out", "paths", "output directory for reports"),
    ("target", "scoring", "target name to keep when files hold several"),
    ("lenient", "scoring", "skip non-quantile rows and out-of-range horizons (true/false)"),
    ("metric", "scoring", "wis | logwis | crps | logcrps | logscore"),
    ("threshold", "scoring", "eligibility fraction of the task space"),
    ("baseline", "scoring", "baseline model id for relative scores"),
    ("task_start", "scoring", "first reference date of the task space"),
    ("task_end", "scoring", "last reference date of the task space"),
    ("horizons", "scoring", "comma-separated horizons, e.g. 0,1,2,3"),
    ("members", "ensemble", "comma-separated member model ids (default: all)"),
    ("combiner", "ensemble", "mean | median"),
    ("min_members", "ensemble", "skip absent members if at least this many remain"),
    ("ensemble_id", "ensemble", "model id of the ensemble output"),
    ("validation", "split", "comma-separated START..END validation blocks"),
    ("test", "split", "START..END retrospective test block"),
    ("prospective", "split", "START..END prospective block (reported only)"),
    ("lag_weeks", "split", "reporting delay in weeks for backtests"),
    ("max_nodes", "search", "node budget"),
    ("max_runtime_secs", "search", "runtime budget in seconds"),
    ("exploration", "search", "PUCT exploration constant"),
    ("penalty", "search", "score assigned to gated or failed nodes"),
    ("batch_size", "search", "children evaluated per round"),
    ("max_children", "search", "expansion cap per node"),
    ("switch_kind_probability", "search", "chance a mutation switches forecaster family"),
    ("seed", "search", "seed for the search and every forecaster"),
    ("sequential", "run", "disable data parallelism (true/false)"),
];

/// Forecaster keys; they apply to every `[forecaster*]` section whose kind
/// has the parameter.
pub const FORECASTER_KEYS: &[(&str, &str)] = &[
    ("kind", "flatline | climatological | ar6_pooled"),
    ("history_diffs", "flat-line: trailing differences used, or all"),
    ("n_samples", "flat-line: Monte Carlo paths"),
    ("window_halfwidth", "climatological: epiweek half-width"),
    ("min_samples", "climatological: minimum pool size"),
    ("smoothing", "climatological: shrinkage toward zero"),
    ("start_date", "climatological: earliest history date, or all"),
    ("epsilon", "ar6: transform offset"),
    ("sigma_floor", "ar6: innovation sd floor"),
    ("n_trajectories", "ar6: simulated paths"),
    ("innovation_scale", "ar6: innovation sd multiplier"),
    ("holiday", "ar6: Christmas-week indicator"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub targets: Option<PathBuf>,
    pub locations: Option<PathBuf>,
    pub submissions: Option<PathBuf>,
    pub out: PathBuf,
    pub target: Option<String>,
    pub lenient: bool,
    pub metric: Metric,
    pub threshold: f64,
    pub baseline: Option<String>,
    pub task_start: Option<NaiveDate>,
    pub task_end: Option<NaiveDate>,
    pub horizons: Vec<Horizon>,
    pub members: Vec<String>,
    pub combiner: Combiner,
    pub min_members: Option<usize>,
    pub ensemble_id: String,
    pub validation: Vec<DateRange>,
    pub test: Option<DateRange>,
    pub prospective: Option<DateRange>,
    pub lag_weeks: u32,
    pub max_nodes: usize,
    pub max_runtime_secs: f64,
    pub exploration: f64,
    pub penalty: f64,
    pub batch_size: usize,
    pub max_children: Option<usize>,
    pub switch_kind_probability: f64,
    pub seed: u64,
    pub sequential: bool,
    /// Named forecaster configurations in file order.
    pub forecasters: Vec<(String, ForecasterConfig)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            targets: None,
            locations: None,
            submissions: None,
            out: PathBuf::from("out"),
            target: None,
            lenient: false,
            metric: Metric::Wis,
            threshold: 0.8,
            baseline: None,
            task_start: None,
            task_end: None,
            horizons: Horizon::all().to_vec(),
            members: Vec::new(),
            combiner: Combiner::MedianPerQuantile,
            min_members: None,
            ensemble_id: "ensemble".into(),
            validation: Vec::new(),
            test: None,
            prospective: None,
            lag_weeks: 1,
            max_nodes: 200,
            max_runtime_secs: 3600.0,
            exploration: 1.0,
            penalty: 1000.0,
            batch_size: 1,
            max_children: None,
            switch_kind_probability: 0.1,
            seed: 0,
            sequential: false,
            forecasters: Vec::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| Failure::usage(format!("{key}: invalid value '{value}': {e}")))
}

fn optional(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then_some(v)
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Gives `f` the run seed when its family is stochastic.
fn seed_forecaster(f: &mut ForecasterConfig, seed: u64) {
    if f.to_pairs().iter().any(|(k, _)| k == "seed") {
        f.set("seed", &seed.to_string()).expect("seed key present");
    }
}

fn is_forecaster_section(name: &str) -> Option<String> {
    if name == "forecaster" {
        Some(String::new())
    } else {
        name.strip_prefix("forecaster.").map(str::to_string)
    }
}

impl RunConfig {
    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }

    /// Sets one run key from text.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        match key {
            "targets" => self.targets = optional(value).map(PathBuf::from),
            "locations" => self.locations = optional(value).map(PathBuf::from),
            "submissions" => self.submissions = optional(value).map(PathBuf::from),
            "out" => self.out = PathBuf::from(value.trim()),
            "target" => self.target = optional(value).map(str::to_string),
            "lenient" => self.lenient = parse(key, value)?,
            "metric" => self.metric = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "baseline" => self.baseline = optional(value).map(str::to_string),
            "task_start" => self.task_start = optional(value).map(|v| parse(key, v)).transpose()?,
            "task_end" => self.task_end = optional(value).map(|v| parse(key, v)).transpose()?,
            "horizons" => {
                self.horizons = list(value)
                    .map(|h| Horizon::new(parse(key, h)?).usage(key))
                    .collect::<Result<_, _>>()?
            }
            "members" => self.members = list(value).map(str::to_string).collect(),
            "combiner" => self.combiner = parse(key, value)?,
            "min_members" => self.min_members = optional(value).map(|v| parse(key, v)).transpose()?,
            "ensemble_id" => self.ensemble_id = value.trim().to_string(),
            "validation" => {
                self.validation = list(value).map(|r| parse(key, r)).collect::<Result<_, _>>()?
            }
            "test" => self.test = optional(value).map(|v| parse(key, v)).transpose()?,
            "prospective" => self.prospective = optional(value).map(|v| parse(key, v)).transpose()?,
            "lag_weeks" => self.lag_weeks = parse(key, value)?,
            "max_nodes" => self.max_nodes = parse(key, value)?,
            "max_runtime_secs" => self.max_runtime_secs = parse(key, value)?,
            "exploration" => self.exploration = parse(key, value)?,
            "penalty" => self.penalty = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_children" => self.max_children = optional(value).map(|v| parse(key, v)).transpose()?,
            "switch_kind_probability" => self.switch_kind_probability = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                for (_, f) in &mut self.forecasters {
                    seed_forecaster(f, self.seed);
                }
            }
            "sequential" => self.sequential = parse(key, value)?,
            other => return Err(Failure::usage(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a forecaster key to every configured forecaster that has it,
    /// creating a default `[forecaster]` when none is configured.
    pub fn set_forecaster_param(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        if self.forecasters.is_empty() {
            self.forecasters
                .push((String::new(), ForecasterConfig::default_for(ForecasterKind::FlatLine)));
        }
        if key == "kind" {
            let kind: ForecasterKind = parse(key, value)?;
            for (_, f) in &mut self.forecasters {
                if f.kind() != kind {
                    *f = ForecasterConfig::default_for(kind);
                    seed_forecaster(f, self.seed);
                }
            }
            return Ok(());
        }
        let mut applied = false;
        for (name, f) in &mut self.forecasters {
            if f.to_pairs().iter().any(|(k, _)| k == key) {
                f.set(key, value).usage(format!("forecaster '{name}'"))?;
                applied = true;
            }
        }
        if !applied {
            log::warn!("--{key} does not apply to any configured forecaster");
        }
        Ok(())
    }

    /// Reads a config file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).usage(format!("reading {}", path.display()))?;
        Self::from_str_config(&text).map_err(|f| match f {
            Failure::Usage(e) => Failure::Usage(e.context(format!("config {}", path.display()))),
            other => other,
        })
    }

    pub fn from_str_config(text: &str) -> Result<Self, Failure> {
        let opt = ParseOption {
            enabled_quote: false,
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opt).usage("parse")?;
        let mut cfg = RunConfig::default();
        let mut run_pairs: Vec<(String, String)> = Vec::new();
        let mut sections: Vec<(String, String, BTreeMap<String, String>)> = Vec::new();
        let mut seen = BTreeMap::new();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            if let Some(name) = is_forecaster_section(section) {
                if sections.iter().any(|(n, _, _)| *n == name) {
                    return Err(Failure::usage(format!("section [{section}] repeated")));
                }
                let mut pairs = BTreeMap::new();
                for (k, v) in props.iter() {
                    if pairs.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(Failure::usage(format!("[{section}]: key '{k}' repeated")));
                    }
                }
                sections.push((name, section.to_string(), pairs));
                continue;
            }
            for (k, v) in props.iter() {
                if let Some(prev) = seen.insert(k.to_string(), section.to_string()) {
                    return Err(Failure::usage(format!(
                        "key '{k}' set in both [{prev}] and [{section}]"
                    )));
                }
                run_pairs.push((k.to_string(), v.to_string()));
            }
        }
        for (k, v) in run_pairs {
            if FORECASTER_KEYS.iter().any(|(fk, _)| *fk == k) {
                return Err(Failure::usage(format!(
                    "key '{k}' belongs in a [forecaster] section"
                )));
            }
            cfg.set(&k, &v)?;
        }
        // Forecasters without their own seed take the run seed.
        for (name, section, mut pairs) in sections {
            pairs.entry("kind".into()).or_insert_with(|| "flatline".into());
            let explicit_seed = pairs.contains_key("seed");
            let mut f = ForecasterConfig::from_pairs(&pairs).usage(format!("[{section}]"))?;
            if !explicit_seed {
                seed_forecaster(&mut f, cfg.seed);
            }
            cfg.forecasters.push((name, f));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Failure::usage(format!("threshold must be in (0, 1], got {}", self.threshold)));
        }
        if self.horizons.is_empty() {
            return Err(Failure::usage("horizons: at least one horizon required"));
        }
        if let (Some(a), Some(b)) = (self.task_start, self.task_end) {
            if a > b {
                return Err(Failure::usage(format!("task_start {a} is after task_end {b}")));
            }
        }
        if self.max_nodes == 0 {
            return Err(Failure::usage("max_nodes must be ≥ 1"));
        }
        if !(self.max_runtime_secs.is_finite() && self.max_runtime_secs > 0.0) {
            return Err(Failure::usage("max_runtime_secs must be positive"));
        }
        if !(0.0..=1.0).contains(&self.switch_kind_probability) {
            return Err(Failure::usage("switch_kind_probability must be in [0, 1]"));
        }
        if self.ensemble_id.is_empty() {
            return Err(Failure::usage("ensemble_id must not be empty"));
        }
        Ok(())
    }

    pub fn ensemble_spec(&self, available: &[String]) -> Result<EnsembleSpec, Failure> {
        let members = if self.members.is_empty() {
            available.to_vec()
        } else {
            self.members.clone()
        };
        let spec = EnsembleSpec::new(members, self.combiner).usage("ensemble")?;
        Ok(match self.min_members {
            Some(min_members) => spec.with_missing_policy(MissingPolicy::SkipIfMissing { min_members }),
            None => spec,
        })
    }

    /// Forecasters to backtest: the configured ones, or each family at its
    /// defaults.
    pub fn backtest_forecasters(&self) -> Vec<(String, ForecasterConfig)> {
        if !self.forecasters.is_empty() {
            return self
                .forecasters
                .iter()
                .map(|(n, f)| {
                    let name = if n.is_empty() { f.kind().to_string() } else { n.clone() };
                    (name, f.clone())
                })
                .collect();
        }
        [ForecasterKind::FlatLine, ForecasterKind::Climatological, ForecasterKind::Ar6Pooled]
            .into_iter()
            .map(|k| {
                let mut f = ForecasterConfig::default_for(k);
                seed_forecaster(&mut f, self.seed);
                (k.to_string(), f)
            })
            .collect()
    }

    /// Search root: the `[forecaster]` section, else the first configured
    /// forecaster, else a default flat line.
    pub fn search_root(&self) -> ForecasterConfig {
        self.forecasters
            .iter()
            .find(|(n, _)| n.is_empty())
            .or_else(|| self.forecasters.first())
            .map(|(_, f)| f.clone())
            .unwrap_or_else(|| {
                let mut f = ForecasterConfig::default_for(ForecasterKind::FlatLine);
                seed_forecaster(&mut f, self.seed);
                f
            })
    }
}

/// Text of a one-section config holding `config`.
pub fn forecaster_section(config: &ForecasterConfig) -> String {
    let mut out = String::from("[forecaster]\n");
    for (k, v) in config.to_pairs() {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}
