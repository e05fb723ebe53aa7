//! Marginal tree posterior at fixed noise variance, with the local
//! log-ratios used by the samplers and the cutpoint perturbation step.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::likelihood::{
    count_usable, log_marginal_from_stats, subtree_leaves, suffstats_for_move, usable_splits,
    CellModel, CellStats, SuffStats,
};
use crate::moves::Move;
use crate::prior::{log_birth_prior_ratio, log_tree_prior, PriorConfig};
use crate::tree::{NodeId, RotateDir, SplitRule, Tree};

/// A tree together with its cell statistics and cached per-leaf marginals.
#[derive(Debug, Clone)]
pub struct TreeFit<'a> {
    pub data: &'a Dataset,
    pub prior: &'a PriorConfig,
    pub model: CellModel,
    pub tree: Tree,
    pub stats: SuffStats,
    depths: Vec<usize>,
    leaf_lml: BTreeMap<NodeId, f64>,
}

impl<'a> TreeFit<'a> {
    pub fn new(tree: Tree, data: &'a Dataset, prior: &'a PriorConfig, sigma2: f64) -> Self {
        let stats = SuffStats::compute(&tree, data);
        Self::from_stats(tree, stats, data, prior, sigma2)
    }

    pub fn from_stats(
        tree: Tree,
        stats: SuffStats,
        data: &'a Dataset,
        prior: &'a PriorConfig,
        sigma2: f64,
    ) -> Self {
        let model = CellModel::new(sigma2, prior);
        let leaf_lml = stats
            .iter()
            .map(|(leaf, c)| (leaf, model.log_marginal(c)))
            .collect();
        TreeFit {
            data,
            prior,
            model,
            depths: tree.depths(),
            tree,
            stats,
            leaf_lml,
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.model.sigma2
    }

    pub fn min_node_size(&self) -> usize {
        self.data.min_node_size()
    }

    pub fn log_likelihood(&self) -> f64 {
        log_marginal_from_stats(&self.stats, self.min_node_size(), self.sigma2(), self.prior)
    }

    /// Unnormalized log marginal posterior of the tree.
    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood() + log_tree_prior(&self.tree, self.data, self.prior)
    }

    pub fn depth(&self, node: NodeId) -> usize {
        self.depths[node.0]
    }

    fn cell_lml(&self, c: &CellStats) -> f64 {
        if c.count < self.min_node_size() {
            f64::NEG_INFINITY
        } else {
            self.model.log_marginal(c)
        }
    }

    fn birth_prior(&self, leaf: NodeId, var: usize) -> f64 {
        log_birth_prior_ratio(
            self.depth(leaf),
            self.data.d(),
            self.data.n_cuts(var),
            self.prior,
        )
    }

    /// Log posterior ratios of every usable birth at `leaf` on `var`, as
    /// `(cut, left stats, right stats, log ratio)` in increasing cut order.
    pub fn birth_log_ratios(
        &self,
        leaf: NodeId,
        var: usize,
    ) -> Vec<(usize, CellStats, CellStats, f64)> {
        let base = self.birth_prior(leaf, var) - self.leaf_lml[&leaf];
        usable_splits(
            self.stats.members(leaf),
            var,
            self.data,
            self.min_node_size(),
        )
        .into_iter()
        .map(|(cut, l, r)| {
            let ratio = base + self.model.log_marginal(&l) + self.model.log_marginal(&r);
            (cut, l, r, ratio)
        })
        .collect()
    }

    /// Log posterior ratio of splitting `leaf` on `rule`; `-inf` if a child
    /// would be undersized.
    pub fn birth_log_ratio(&self, leaf: NodeId, rule: SplitRule) -> f64 {
        let (l, r) = self.split_stats(leaf, rule);
        self.birth_prior(leaf, rule.var) - self.leaf_lml[&leaf]
            + self.cell_lml(&l)
            + self.cell_lml(&r)
    }

    pub fn split_stats(&self, leaf: NodeId, rule: SplitRule) -> (CellStats, CellStats) {
        let y = self.data.response();
        let mut l = CellStats::default();
        let mut r = CellStats::default();
        for &i in self.stats.members(leaf) {
            if self.data.goes_left(rule, i) {
                l.push(y[i]);
            } else {
                r.push(y[i]);
            }
        }
        (l, r)
    }

    /// Statistics of the two children of a nog and of their union.
    pub fn death_stats(&self, node: NodeId) -> (CellStats, CellStats, CellStats) {
        let (l, r) = self.tree.children(node).expect("nog node");
        let (sl, sr) = (self.stats.get(l), self.stats.get(r));
        (sl, sr, sl.add(&sr))
    }

    /// Log posterior ratio of collapsing the nog `node`.
    pub fn death_log_ratio(&self, node: NodeId) -> f64 {
        let (l, r) = self.tree.children(node).expect("nog node");
        let rule = self.tree.rule(node).expect("nog node");
        let merged = self.stats.get(l).add(&self.stats.get(r));
        self.cell_lml(&merged)
            - self.leaf_lml[&l]
            - self.leaf_lml[&r]
            - self.birth_prior(node, rule.var)
    }

    /// Log posterior ratio of a rotation; `-inf` if it empties or
    /// undersizes a cell. Also returns the rotated fit.
    pub fn rotate(&self, node: NodeId, dir: RotateDir) -> (f64, TreeFit<'a>) {
        let mv = Move::Rotate { node, dir };
        let (new_tree, new_stats) =
            suffstats_for_move(&self.stats, &self.tree, &mv, self.data).expect("legal rotation");
        let fit = TreeFit::from_stats(new_tree, new_stats, self.data, self.prior, self.sigma2());
        let old: f64 = subtree_leaves(&self.tree, node)
            .iter()
            .map(|l| self.leaf_lml[l])
            .sum();
        let mut new = 0.0;
        for leaf in subtree_leaves(&fit.tree, node) {
            if fit.stats.get(leaf).count < self.min_node_size() {
                new = f64::NEG_INFINITY;
                break;
            }
            new += fit.leaf_lml[&leaf];
        }
        let prior_delta = log_tree_prior(&fit.tree, self.data, self.prior)
            - log_tree_prior(&self.tree, self.data, self.prior);
        (new - old + prior_delta, fit)
    }

    pub fn rotate_log_ratio(&self, node: NodeId, dir: RotateDir) -> f64 {
        self.rotate(node, dir).0
    }

    /// Apply a move and rebuild the fit incrementally.
    pub fn apply(&self, mv: &Move) -> TreeFit<'a> {
        let (tree, stats) =
            suffstats_for_move(&self.stats, &self.tree, mv, self.data).expect("legal move");
        TreeFit::from_stats(tree, stats, self.data, self.prior, self.sigma2())
    }
}

/// Acceptance bookkeeping for the perturbation step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbStats {
    pub proposed: u64,
    pub accepted: u64,
}

/// One Metropolis-Hastings sweep over the internal nodes, in id order.
///
/// At each internal node a variable is drawn uniformly, then a cutpoint
/// uniformly among those leaving both children at least the minimum node
/// size, and the two subtrees are swapped with probability one half. The
/// proposal ratio is the ratio of usable-cut counts of the new and old
/// variables. Swapping lets the sweep trade a split for an equivalent one on
/// a confounded variable whose ordering runs the other way.
pub fn perturb_step<R: Rng + ?Sized>(
    tree: &Tree,
    data: &Dataset,
    prior: &PriorConfig,
    sigma2: f64,
    rng: &mut R,
) -> (Tree, PerturbStats) {
    let mut current = TreeFit::new(tree.clone(), data, prior, sigma2);
    let mut current_post = current.log_posterior();
    let mut out = PerturbStats::default();
    for idx in 0..current.tree.len() {
        let node = NodeId(idx);
        let Some(old_rule) = current.tree.rule(node) else {
            continue;
        };
        let members = current.tree.node_members(data).swap_remove(idx);
        let var = rng.random_range(0..data.d());
        let usable = usable_splits(&members, var, data, data.min_node_size());
        let mirror = rng.random_bool(0.5);
        if usable.is_empty() {
            continue;
        }
        let cut = usable[rng.random_range(0..usable.len())].0;
        let rule = SplitRule::new(var, cut);
        if rule == old_rule && !mirror {
            continue;
        }
        out.proposed += 1;
        let mut proposal = current.tree.with_rule(node, rule).expect("internal node");
        if mirror {
            proposal = proposal.mirror(node).expect("internal node");
        }
        let old_usable = count_usable(&members, old_rule.var, data, data.min_node_size());
        let fit = TreeFit::new(proposal, data, prior, sigma2);
        let post = fit.log_posterior();
        let log_accept =
            post - current_post + (usable.len() as f64).ln() - (old_usable.max(1) as f64).ln();
        if log_accept >= 0.0 || rng.random::<f64>().ln() < log_accept {
            out.accepted += 1;
            current = fit;
            current_post = post;
        }
    }
    (current.tree, out)
}
