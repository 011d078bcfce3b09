use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tree::{puct_select, SearchTree};
use super::{selection_score, SearchError};
use crate::exec::Execution;
use crate::forecasters::{ForecasterConfig, ForecasterKind};

/// Score assigned to nodes that fail the gate or the evaluator.
pub const DEFAULT_PENALTY: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationError(pub String);

impl fmt::Display for EvaluationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for EvaluationError {}

pub trait Evaluator: Sync {
    fn evaluate(&self, config: &ForecasterConfig) -> Result<f64, EvaluationError>;
}

impl<F> Evaluator for F
where
    F: Fn(&ForecasterConfig) -> Result<f64, EvaluationError> + Sync,
{
    fn evaluate(&self, config: &ForecasterConfig) -> Result<f64, EvaluationError> {
        self(config)
    }
}

/// Compliance check applied before a candidate is evaluated.
pub trait Gate: Sync {
    fn passes(&self, config: &ForecasterConfig) -> bool;
}

pub struct AlwaysPass;

impl Gate for AlwaysPass {
    fn passes(&self, _: &ForecasterConfig) -> bool {
        true
    }
}

impl<F> Gate for F
where
    F: Fn(&ForecasterConfig) -> bool + Sync,
{
    fn passes(&self, config: &ForecasterConfig) -> bool {
        self(config)
    }
}

/// Produces a child configuration from its parent.
pub trait Proposer: Sync {
    fn propose(&self, parent: &ForecasterConfig, rng: &mut ChaCha8Rng) -> ForecasterConfig;

    fn prior(&self, _config: &ForecasterConfig) -> f64 {
        1.0
    }
}

/// Random local edits: window widths, ε, innovation scale, difference
/// history, shrinkage, and occasionally a switch of forecaster family.
#[derive(Debug, Clone)]
pub struct MutationProposer {
    pub switch_kind_probability: f64,
}

impl Default for MutationProposer {
    fn default() -> Self {
        Self {
            switch_kind_probability: 0.1,
        }
    }
}

fn log_jitter(x: f64, sd: f64, rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = Normal::new(0.0, sd).expect("positive sd").sample(rng);
    x * z.exp()
}

impl Proposer for MutationProposer {
    fn propose(&self, parent: &ForecasterConfig, rng: &mut ChaCha8Rng) -> ForecasterConfig {
        if rng.random_bool(self.switch_kind_probability) {
            let kinds = [
                ForecasterKind::FlatLine,
                ForecasterKind::Climatological,
                ForecasterKind::Ar6Pooled,
            ];
            let others: Vec<_> = kinds.into_iter().filter(|k| *k != parent.kind()).collect();
            return ForecasterConfig::default_for(others[rng.random_range(0..others.len())]);
        }
        let mut child = parent.clone();
        match &mut child {
            ForecasterConfig::FlatLine(p) => {
                let current = p.history_diffs.unwrap_or(52) as i64;
                let step = rng.random_range(-8i64..=8);
                p.history_diffs = Some((current + step).clamp(2, 260) as usize);
            }
            ForecasterConfig::Climatological(p) => match rng.random_range(0..3) {
                0 => {
                    let w = p.window_halfwidth as i64 + if rng.random_bool(0.5) { 1 } else { -1 };
                    p.window_halfwidth = w.clamp(0, 26) as u32;
                }
                1 => {
                    let s = p.smoothing + rng.random_range(-0.1..=0.1);
                    p.smoothing = s.clamp(0.0, 0.9);
                }
                _ => {
                    let m = p.min_samples as i64 + rng.random_range(-2i64..=2);
                    p.min_samples = m.clamp(1, 50) as usize;
                }
            },
            ForecasterConfig::Ar6Pooled(p) => match rng.random_range(0..3) {
                0 => p.epsilon = log_jitter(p.epsilon, 1.0, rng).clamp(1e-6, 100.0),
                1 => p.innovation_scale = log_jitter(p.innovation_scale, 0.25, rng).clamp(0.05, 20.0),
                _ => p.holiday = !p.holiday,
            },
        }
        child
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_nodes: usize,
    pub max_runtime: Duration,
}

impl Budget {
    pub fn new(max_nodes: usize, max_runtime: Duration) -> Result<Self, SearchError> {
        if max_nodes == 0 {
            return Err(SearchError::InvalidBudget("max_nodes must be positive"));
        }
        if max_runtime.is_zero() {
            return Err(SearchError::InvalidBudget("max_runtime must be positive"));
        }
        Ok(Self {
            max_nodes,
            max_runtime,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub exploration: f64,
    pub penalty: f64,
    /// Candidates proposed and evaluated together per round.
    pub batch_size: usize,
    pub max_children: Option<usize>,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            exploration: 1.0,
            penalty: DEFAULT_PENALTY,
            batch_size: 1,
            max_children: None,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub node_id: usize,
    pub parent_id: Option<usize>,
    pub score: f64,
    pub cumulative_best: f64,
    pub gate_passed: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub tree: SearchTree,
    pub trajectory: Vec<TrajectoryRow>,
    pub best_node: usize,
    /// Summed evaluator wall time.
    pub runtime: Duration,
}

fn evaluate_one(
    config: &ForecasterConfig,
    evaluator: &dyn Evaluator,
    gate: &dyn Gate,
    penalty: f64,
) -> (f64, bool, bool, Duration) {
    if !gate.passes(config) {
        return (penalty, false, false, Duration::ZERO);
    }
    let t0 = Instant::now();
    let res = evaluator.evaluate(config);
    let wall = t0.elapsed();
    match res {
        Ok(s) if s.is_finite() && s >= 0.0 => (s, true, false, wall),
        Ok(s) => {
            log::warn!("evaluator returned {s} for {config}; applying penalty");
            (penalty, true, true, wall)
        }
        Err(e) => {
            log::warn!("evaluation of {config} failed: {e}; applying penalty");
            (penalty, true, true, wall)
        }
    }
}

/// Budgeted PUCT search from `root`.
///
/// Each round selects up to `batch_size` parents, one at a time with the
/// pending children already counted as visits, proposes a child for each
/// and evaluates the batch. Gate failures and evaluator errors score the
/// penalty. Stops when either budget is spent or nothing is expandable.
pub fn run_search(
    root: ForecasterConfig,
    proposer: &dyn Proposer,
    evaluator: &dyn Evaluator,
    gate: &dyn Gate,
    budget: Budget,
    opts: &SearchOptions,
) -> Result<SearchOutcome, SearchError> {
    if !(opts.exploration >= 0.0 && opts.exploration.is_finite()) {
        return Err(SearchError::InvalidOption("exploration constant must be ≥ 0"));
    }
    if !opts.penalty.is_finite() {
        return Err(SearchError::InvalidOption("penalty must be finite"));
    }
    if opts.batch_size == 0 {
        return Err(SearchError::InvalidOption("batch_size must be ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let prior = proposer.prior(&root);
    let mut tree = SearchTree::new(root, prior);
    tree.visit(0);
    let (s, passed, failed, wall) = evaluate_one(&tree.node(0).config, evaluator, gate, opts.penalty);
    tree.record(0, s, passed, failed, wall);
    let mut runtime = wall;

    while tree.len() < budget.max_nodes && runtime < budget.max_runtime {
        let room = (budget.max_nodes - tree.len()).min(opts.batch_size);
        let mut pending = Vec::with_capacity(room);
        for _ in 0..room {
            let Some(parent) = puct_select(&tree, opts.exploration, opts.max_children) else {
                break;
            };
            let config = proposer.propose(&tree.node(parent).config, &mut rng);
            let prior = proposer.prior(&config);
            pending.push(tree.add_child(parent, config, prior));
        }
        if pending.is_empty() {
            break;
        }
        let configs: Vec<&ForecasterConfig> = pending.iter().map(|&id| &tree.node(id).config).collect();
        let results = opts
            .exec
            .map(&configs, |c| evaluate_one(c, evaluator, gate, opts.penalty));
        for (id, (s, passed, failed, wall)) in pending.into_iter().zip(results) {
            tree.record(id, s, passed, failed, wall);
            runtime += wall;
        }
    }

    let mut trajectory = Vec::with_capacity(tree.len());
    let mut best = f64::INFINITY;
    for n in tree.nodes() {
        let score = n.validation_score.expect("all nodes evaluated");
        best = best.min(score);
        trajectory.push(TrajectoryRow {
            node_id: n.id,
            parent_id: n.parent,
            score,
            cumulative_best: best,
            gate_passed: n.gate_passed,
            wall_ms: n.wall.as_secs_f64() * 1e3,
        });
    }
    let best_node = best_node(&tree);
    Ok(SearchOutcome {
        tree,
        trajectory,
        best_node,
        runtime,
    })
}

/// Lowest validation score among gate-passing nodes, or among all nodes when
/// every node was gated. Ties go to the lowest id.
fn best_node(tree: &SearchTree) -> usize {
    let pick = |only_passed: bool| {
        tree.nodes()
            .iter()
            .filter(|n| !only_passed || n.gate_passed)
            .fold(None::<(usize, f64)>, |acc, n| {
                let s = n.validation_score.unwrap_or(f64::INFINITY);
                match acc {
                    Some((_, b)) if s >= b => acc,
                    _ => Some((n.id, s)),
                }
            })
    };
    pick(true).or_else(|| pick(false)).expect("tree has a root").0
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSelection {
    pub node_id: usize,
    pub validation: f64,
    pub test: f64,
    pub selection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalSelection {
    pub chosen: NodeSelection,
    /// Every node in id order.
    pub table: Vec<NodeSelection>,
}

/// Scores every node on the retrospective test block and returns the node
/// minimizing validation + 2 × test. Ties go to the lowest id; test failures
/// take the penalty.
pub fn select_final_node(
    tree: &SearchTree,
    test_evaluator: &dyn Evaluator,
    penalty: f64,
    exec: Execution,
) -> Result<FinalSelection, SearchError> {
    if tree.is_empty() {
        return Err(SearchError::EmptyTree);
    }
    let tests = exec.map(tree.nodes(), |n| {
        if !n.gate_passed {
            return penalty;
        }
        match test_evaluator.evaluate(&n.config) {
            Ok(s) if s.is_finite() && s >= 0.0 => s,
            Ok(_) | Err(_) => penalty,
        }
    });
    let table: Vec<NodeSelection> = tree
        .nodes()
        .iter()
        .zip(tests)
        .map(|(n, test)| {
            let validation = n.validation_score.unwrap_or(penalty);
            NodeSelection {
                node_id: n.id,
                validation,
                test,
                selection: selection_score(validation, test),
            }
        })
        .collect();
    let mut chosen = table[0].clone();
    for row in &table[1..] {
        if row.selection < chosen.selection {
            chosen = row.clone();
        }
    }
    Ok(FinalSelection { chosen, table })
}
