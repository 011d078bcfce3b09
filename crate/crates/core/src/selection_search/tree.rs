use std::time::Duration;

use crate::forecasters::ForecasterConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub config: ForecasterConfig,
    /// `None` while the evaluation is pending.
    pub validation_score: Option<f64>,
    /// Evaluated nodes in this subtree, this node included.
    pub visit_count: u64,
    pub gate_passed: bool,
    /// Set when the evaluator failed and the penalty was applied.
    pub failed: bool,
    pub prior: f64,
    pub children: Vec<usize>,
    pub wall: Duration,
}

/// Arena of search nodes; ids are indices, so parents precede children.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn new(root: ForecasterConfig, prior: f64) -> Self {
        let mut t = Self { nodes: Vec::new() };
        t.push(None, root, prior);
        t
    }

    fn push(&mut self, parent: Option<usize>, config: ForecasterConfig, prior: f64) -> usize {
        let id = self.nodes.len();
        self.nodes.push(SearchNode {
            id,
            parent,
            config,
            validation_score: None,
            visit_count: 0,
            gate_passed: true,
            failed: false,
            prior,
            children: Vec::new(),
            wall: Duration::ZERO,
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        id
    }

    /// Adds a pending child and counts its visit along the path to the root.
    pub fn add_child(&mut self, parent: usize, config: ForecasterConfig, prior: f64) -> usize {
        let id = self.push(Some(parent), config, prior);
        self.visit(id);
        id
    }

    /// Counts one visit at `id` and every ancestor.
    pub fn visit(&mut self, id: usize) {
        let mut cur = Some(id);
        while let Some(i) = cur {
            self.nodes[i].visit_count += 1;
            cur = self.nodes[i].parent;
        }
    }

    pub fn record(&mut self, id: usize, score: f64, gate_passed: bool, failed: bool, wall: Duration) {
        let n = &mut self.nodes[id];
        n.validation_score = Some(score);
        n.gate_passed = gate_passed;
        n.failed = failed;
        n.wall = wall;
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Reward in `(0, 1]`: lower scores map to higher reward.
pub fn reward(score: f64) -> f64 {
    1.0 / (1.0 + score)
}

/// PUCT choice among evaluated nodes that can take another child.
///
/// Maximizes `Q + c·P·√N_parent / (1 + N)`; the root uses its own visit
/// count as `N_parent`. Ties go to the lowest id. `None` means nothing is
/// expandable.
pub fn puct_select(tree: &SearchTree, exploration: f64, max_children: Option<usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for n in tree.nodes() {
        let Some(score) = n.validation_score else {
            continue;
        };
        if max_children.is_some_and(|m| n.children.len() >= m) {
            continue;
        }
        let parent_visits = n.parent.map_or(n.visit_count, |p| tree.node(p).visit_count);
        let u = exploration * n.prior * (parent_visits as f64).sqrt() / (1.0 + n.visit_count as f64);
        let value = reward(score) + u;
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((n.id, value));
        }
    }
    best.map(|(id, _)| id)
}
