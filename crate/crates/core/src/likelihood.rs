//! Per-cell sufficient statistics and the Gaussian tree likelihoods.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use thiserror::Error;

use crate::data::Dataset;
use crate::moves::Move;
use crate::prior::PriorConfig;
use crate::tree::{NodeId, NodeMap, SplitRule, Tree, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LikelihoodError {
    #[error("terminal node {0} carries no value")]
    MissingValue(NodeId),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Count, sum and sum of squares of the responses in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellStats {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl CellStats {
    pub fn from_rows(rows: &[usize], response: &[f64]) -> Self {
        let mut s = CellStats::default();
        for &i in rows {
            s.push(response[i]);
        }
        s
    }

    pub fn push(&mut self, y: f64) {
        self.count += 1;
        self.sum += y;
        self.sum_sq += y * y;
    }

    pub fn add(&self, other: &CellStats) -> CellStats {
        CellStats {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    pub fn subtract(&self, other: &CellStats) -> CellStats {
        CellStats {
            count: self.count - other.count,
            sum: self.sum - other.sum,
            sum_sq: self.sum_sq - other.sum_sq,
        }
    }

    /// Sum of squared deviations from the cell mean.
    pub fn centered_ss(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.sum_sq - self.sum * self.sum / self.count as f64).max(0.0)
    }
}

/// Statistics and member rows of every terminal cell of a tree.
///
/// Member rows are kept ascending, and statistics are accumulated in that
/// order, so incremental updates agree bit for bit with a fresh computation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuffStats {
    cells: BTreeMap<NodeId, (CellStats, Vec<usize>)>,
}

impl SuffStats {
    pub fn compute(tree: &Tree, data: &Dataset) -> Self {
        let mut cells: BTreeMap<NodeId, (CellStats, Vec<usize>)> = tree
            .terminal_nodes()
            .into_iter()
            .map(|leaf| (leaf, (CellStats::default(), Vec::new())))
            .collect();
        let y = data.response();
        for (i, yi) in y.iter().enumerate() {
            let leaf = tree.route(|rule| data.goes_left(rule, i));
            let cell = cells.get_mut(&leaf).expect("route ends at a terminal");
            cell.0.push(*yi);
            cell.1.push(i);
        }
        SuffStats { cells }
    }

    /// Statistics of a terminal cell (empty if the node is unknown).
    pub fn get(&self, leaf: NodeId) -> CellStats {
        self.cells.get(&leaf).map(|c| c.0).unwrap_or_default()
    }

    pub fn members(&self, leaf: NodeId) -> &[usize] {
        self.cells.get(&leaf).map(|c| c.1.as_slice()).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &CellStats)> {
        self.cells.iter().map(|(k, v)| (*k, &v.0))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Smallest cell size (zero for an empty map).
    pub fn min_count(&self) -> usize {
        self.cells.values().map(|c| c.0.count).min().unwrap_or(0)
    }

    fn remapped(
        &self,
        map: &NodeMap,
        skip: &[NodeId],
    ) -> BTreeMap<NodeId, (CellStats, Vec<usize>)> {
        self.cells
            .iter()
            .filter(|(k, _)| !skip.contains(k))
            .filter_map(|(k, v)| map.get(k.0).copied().flatten().map(|n| (n, v.clone())))
            .collect()
    }
}

/// Split member rows (ascending) by a rule, keeping both halves ascending.
pub fn split_rows(rows: &[usize], rule: SplitRule, data: &Dataset) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&i| data.goes_left(rule, i))
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Statistics of the tree obtained by applying `mv` to `tree`, touching only
/// the cells the move affects. Returns the new tree alongside.
pub fn suffstats_for_move(
    stats: &SuffStats,
    tree: &Tree,
    mv: &Move,
    data: &Dataset,
) -> Result<(Tree, SuffStats), TreeError> {
    let y = data.response();
    let (new_tree, map) = mv.apply_mapped(tree)?;
    let cells = match *mv {
        Move::Birth { leaf, rule } => {
            let mut cells = stats.remapped(&map, &[leaf]);
            let (l, r) = new_tree
                .children(map[leaf.0].expect("leaf survives"))
                .expect("new split");
            let (lrows, rrows) = split_rows(stats.members(leaf), rule, data);
            cells.insert(l, (CellStats::from_rows(&lrows, y), lrows));
            cells.insert(r, (CellStats::from_rows(&rrows, y), rrows));
            cells
        }
        Move::Death { node } => {
            let (l, r) = tree.children(node).ok_or(TreeError::NotCollapsible(node))?;
            let mut cells = stats.remapped(&map, &[l, r]);
            let rows = merge_sorted(stats.members(l), stats.members(r));
            let leaf = map[node.0].expect("collapsed node survives");
            cells.insert(leaf, (CellStats::from_rows(&rows, y), rows));
            cells
        }
        Move::Rotate { node, .. } => {
            // Leaves below the rotated node keep their slots but may gain or
            // lose rows; re-route the subtree's rows from scratch.
            let below = subtree_leaves(tree, node);
            let mut cells = stats.remapped(&map, &below);
            let mut rows: Vec<usize> = below
                .iter()
                .flat_map(|l| stats.members(*l).iter().copied())
                .collect();
            rows.sort_unstable();
            let new_below = subtree_leaves(&new_tree, map[node.0].expect("node survives"));
            for leaf in &new_below {
                cells.insert(*leaf, (CellStats::default(), Vec::new()));
            }
            for i in rows {
                let leaf = new_tree.route(|rule| data.goes_left(rule, i));
                let cell = cells
                    .get_mut(&leaf)
                    .expect("row stays below the rotated node");
                cell.0.push(y[i]);
                cell.1.push(i);
            }
            cells
        }
    };
    Ok((new_tree, SuffStats { cells }))
}

/// Terminal nodes in the subtree rooted at `node`.
pub fn subtree_leaves(tree: &Tree, node: NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![node];
    while let Some(id) = stack.pop() {
        match tree.children(id) {
            Some((l, r)) => {
                stack.push(r);
                stack.push(l);
            }
            None => out.push(id),
        }
    }
    out
}

/// Constants shared by every cell evaluation at a given noise variance.
#[derive(Debug, Clone, Copy)]
pub struct CellModel {
    pub sigma2: f64,
    pub sigma_mu2: f64,
    ln_2pi_sigma2: f64,
}

impl CellModel {
    pub fn new(sigma2: f64, prior: &PriorConfig) -> Self {
        CellModel {
            sigma2,
            sigma_mu2: prior.sigma_mu * prior.sigma_mu,
            ln_2pi_sigma2: (2.0 * PI * sigma2).ln(),
        }
    }

    /// Log marginal likelihood of one cell with its terminal value
    /// integrated out.
    pub fn log_marginal(&self, c: &CellStats) -> f64 {
        let m = c.count as f64;
        let s2 = self.sigma2;
        let denom = s2 + m * self.sigma_mu2;
        -0.5 * m * self.ln_2pi_sigma2 + 0.5 * (s2 / denom).ln() - c.sum_sq / (2.0 * s2)
            + self.sigma_mu2 * c.sum * c.sum / (2.0 * s2 * denom)
    }

    /// Log likelihood of one cell at terminal value `mu`.
    pub fn log_full(&self, c: &CellStats, mu: f64) -> f64 {
        let m = c.count as f64;
        let rss = c.sum_sq - 2.0 * mu * c.sum + m * mu * mu;
        -0.5 * m * self.ln_2pi_sigma2 - rss / (2.0 * self.sigma2)
    }
}

pub fn log_marginal_cell(stats: &CellStats, sigma2: f64, prior: &PriorConfig) -> f64 {
    CellModel::new(sigma2, prior).log_marginal(stats)
}

/// Sum of cell marginals, or `-inf` if some cell holds fewer than the
/// minimum number of observations.
pub fn log_marginal_from_stats(
    stats: &SuffStats,
    min_node_size: usize,
    sigma2: f64,
    prior: &PriorConfig,
) -> f64 {
    let model = CellModel::new(sigma2, prior);
    let mut total = 0.0;
    for (_, cell) in stats.iter() {
        if cell.count < min_node_size {
            return f64::NEG_INFINITY;
        }
        total += model.log_marginal(cell);
    }
    total
}

pub fn log_marginal_likelihood(
    tree: &Tree,
    data: &Dataset,
    sigma2: f64,
    prior: &PriorConfig,
) -> f64 {
    log_marginal_from_stats(
        &SuffStats::compute(tree, data),
        data.min_node_size(),
        sigma2,
        prior,
    )
}

/// Gaussian log likelihood of the data given a tree with terminal values,
/// summed observation by observation.
pub fn log_full_likelihood(
    tree: &Tree,
    data: &Dataset,
    sigma2: f64,
) -> Result<f64, LikelihoodError> {
    let ln_norm = -0.5 * (2.0 * PI * sigma2).ln();
    let y = data.response();
    let mut total = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let leaf = tree.route(|rule| data.goes_left(rule, i));
        let mu = tree.mu(leaf).ok_or(LikelihoodError::MissingValue(leaf))?;
        total += ln_norm - (yi - mu).powi(2) / (2.0 * sigma2);
    }
    // A tree whose empty cells lack values is still incomplete.
    if let Some(leaf) = tree
        .terminal_nodes()
        .into_iter()
        .find(|l| tree.mu(*l).is_none())
    {
        return Err(LikelihoodError::MissingValue(leaf));
    }
    Ok(total)
}

/// Per-cut statistics of a cell split on one variable, via prefix sums over
/// the variable's rank bins. Only cuts leaving at least `min_node_size` rows
/// on each side are returned, in increasing cut order.
pub fn usable_splits(
    rows: &[usize],
    var: usize,
    data: &Dataset,
    min_node_size: usize,
) -> Vec<(usize, CellStats, CellStats)> {
    let n_cuts = data.n_cuts(var);
    if rows.len() < 2 * min_node_size {
        return Vec::new();
    }
    let y = data.response();
    let mut bins = vec![CellStats::default(); n_cuts + 1];
    let mut total = CellStats::default();
    for &i in rows {
        bins[data.rank(var, i)].push(y[i]);
        total.push(y[i]);
    }
    let mut out = Vec::new();
    let mut left = CellStats::default();
    for (cut, bin) in bins.iter().take(n_cuts).enumerate() {
        left = left.add(bin);
        if left.count < min_node_size {
            continue;
        }
        if total.count - left.count < min_node_size {
            break;
        }
        out.push((cut, left, total.subtract(&left)));
    }
    out
}

/// Number of usable cuts for `var` on a cell.
pub fn count_usable(rows: &[usize], var: usize, data: &Dataset, min_node_size: usize) -> usize {
    if rows.len() < 2 * min_node_size {
        return 0;
    }
    let mut bins = vec![0usize; data.n_cuts(var) + 1];
    for &i in rows {
        bins[data.rank(var, i)] += 1;
    }
    let mut left = 0;
    let mut count = 0;
    for bin in bins.iter().take(data.n_cuts(var)) {
        left += bin;
        if left >= min_node_size && rows.len() - left >= min_node_size {
            count += 1;
        }
    }
    count
}
