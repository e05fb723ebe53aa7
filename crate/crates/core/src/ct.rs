//! Continuous-time birth-death(-rotate) sampler.
//!
//! Every candidate move out of the current tree gets a rate
//! `min{1, posterior ratio}`. The chain holds the current tree for the
//! expected time `1 / sum(rates)`, then jumps to a candidate drawn with
//! probability proportional to its rate. Jumps are never rejected.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainContext, ChainRecord, ChainState, SamplerError};
use crate::config::RunConfig;
use crate::data::Dataset;
use crate::likelihood::{usable_splits, CellModel, CellStats, SuffStats};
use crate::moves::{Move, MoveKind};
use crate::posterior::{perturb_step, TreeFit};
use crate::prior::{
    draw_leaf_values, gibbs_sigma2, leaf_posterior, log_birth_prior_ratio, log_mu_prior,
    residual_ss, sample_sigma2, PriorConfig,
};
use crate::tree::{NodeId, SplitRule, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveSet {
    BirthDeath,
    BirthDeathRotate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveCandidate {
    pub mv: Move,
    /// Log of the (possibly family-weighted) rate; never positive.
    pub log_rate: f64,
}

impl MoveCandidate {
    pub fn rate(&self) -> f64 {
        self.log_rate.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateSummary {
    pub total_birth: f64,
    pub total_death: f64,
    pub total_rotate: f64,
    pub waiting_time: f64,
}

impl RateSummary {
    pub fn from_candidates(candidates: &[MoveCandidate]) -> Self {
        let mut s = RateSummary::default();
        for c in candidates {
            match c.mv.kind() {
                MoveKind::Birth => s.total_birth += c.rate(),
                MoveKind::Death => s.total_death += c.rate(),
                MoveKind::Rotate => s.total_rotate += c.rate(),
                MoveKind::Stay => {}
            }
        }
        s.waiting_time = 1.0 / total_rate(candidates);
        s
    }
}

/// Sum of candidate rates in candidate order.
pub fn total_rate(candidates: &[MoveCandidate]) -> f64 {
    candidates.iter().map(MoveCandidate::rate).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtConfig {
    pub moves: MoveSet,
    /// Share of the jump intensity given to birth/death against rotation.
    pub alpha_mix: f64,
    pub perturb: bool,
    pub full_conditional: bool,
    pub sampled_waiting_times: bool,
    pub parallel: bool,
}

impl Default for CtConfig {
    fn default() -> Self {
        CtConfig {
            moves: MoveSet::BirthDeath,
            alpha_mix: 0.5,
            perturb: false,
            full_conditional: false,
            sampled_waiting_times: false,
            parallel: true,
        }
    }
}

impl CtConfig {
    pub fn from_run(run: &RunConfig) -> Self {
        CtConfig {
            moves: if run.algorithm.uses_rotate() {
                MoveSet::BirthDeathRotate
            } else {
                MoveSet::BirthDeath
            },
            alpha_mix: run.alpha_mix,
            perturb: run.algorithm.uses_perturb(),
            full_conditional: run.full_conditional,
            sampled_waiting_times: run.sampled_waiting_times,
            parallel: run.parallel_candidates,
        }
    }

    /// Rate multipliers `(birth/death, rotate)`, in ratio
    /// `alpha : 1 - alpha` with the larger one equal to 1. At `alpha = 0.5`
    /// both families keep their plain rates; at `alpha = 1` rotations drop
    /// out and the chain is the birth-death chain.
    pub fn family_weights(&self) -> (f64, f64) {
        if self.moves == MoveSet::BirthDeath {
            return (1.0, 0.0);
        }
        let a = self.alpha_mix;
        if a >= 0.5 {
            (1.0, (1.0 - a) / a)
        } else {
            (a / (1.0 - a), 1.0)
        }
    }
}

fn clamp(log_ratio: f64) -> f64 {
    debug_assert!(!log_ratio.is_nan());
    if log_ratio.is_nan() {
        f64::NEG_INFINITY
    } else {
        log_ratio.min(0.0)
    }
}

/// Birth candidates use only cutpoints leaving both children at least the
/// minimum node size; other cutpoints have rate zero and are left out.
/// Order: births by (leaf, variable, cut), then deaths, then rotations.
pub fn enumerate_moves(
    tree: &Tree,
    data: &Dataset,
    sigma2: f64,
    cfg: &PriorConfig,
    mode: MoveSet,
) -> Vec<MoveCandidate> {
    let fit = TreeFit::new(tree.without_values(), data, cfg, sigma2);
    enumerate_candidates(&fit, mode, false)
}

pub fn enumerate_candidates(
    fit: &TreeFit<'_>,
    mode: MoveSet,
    parallel: bool,
) -> Vec<MoveCandidate> {
    let jobs: Vec<(NodeId, usize)> = fit
        .tree
        .terminal_nodes()
        .into_iter()
        .flat_map(|leaf| (0..fit.data.d()).map(move |var| (leaf, var)))
        .collect();
    let eval = |&(leaf, var): &(NodeId, usize)| -> Vec<MoveCandidate> {
        fit.birth_log_ratios(leaf, var)
            .into_iter()
            .map(|(cut, _, _, r)| MoveCandidate {
                mv: Move::Birth {
                    leaf,
                    rule: SplitRule::new(var, cut),
                },
                log_rate: clamp(r),
            })
            .collect()
    };
    let births: Vec<Vec<MoveCandidate>> =
        if parallel && jobs.len() > 1 && rayon::current_num_threads() > 1 {
            jobs.par_iter().map(eval).collect()
        } else {
            jobs.iter().map(eval).collect()
        };
    let mut out: Vec<MoveCandidate> = births.into_iter().flatten().collect();
    for node in fit.tree.death_candidates() {
        out.push(MoveCandidate {
            mv: Move::Death { node },
            log_rate: clamp(fit.death_log_ratio(node)),
        });
    }
    if mode == MoveSet::BirthDeathRotate {
        for (node, dir) in fit.tree.rotate_candidates() {
            out.push(MoveCandidate {
                mv: Move::Rotate { node, dir },
                log_rate: clamp(fit.rotate_log_ratio(node, dir)),
            });
        }
    }
    out
}

/// Scale rates by family weight, dropping families with weight zero.
fn apply_family_weights(candidates: Vec<MoveCandidate>, cfg: &CtConfig) -> Vec<MoveCandidate> {
    let (bd, rot) = cfg.family_weights();
    if bd == 1.0 && rot == 1.0 {
        return candidates;
    }
    candidates
        .into_iter()
        .filter_map(|mut c| {
            let w = if c.mv.kind() == MoveKind::Rotate {
                rot
            } else {
                bd
            };
            if w == 0.0 {
                return None;
            }
            if w != 1.0 {
                c.log_rate += w.ln();
            }
            Some(c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub index: usize,
    pub total_rate: f64,
    pub waiting_time: f64,
}

/// Draw a candidate with probability proportional to its rate. The waiting
/// time is the expected holding time `1 / total`.
pub fn select_jump<R: Rng + ?Sized>(
    candidates: &[MoveCandidate],
    rng: &mut R,
) -> Result<Jump, SamplerError> {
    let total = total_rate(candidates);
    if total.is_nan() || total <= 0.0 {
        return Err(SamplerError::Stuck(String::new()));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, c) in candidates.iter().enumerate() {
        let r = c.rate();
        if r > 0.0 {
            last_positive = i;
            acc += r;
            if u < acc {
                return Ok(Jump {
                    index: i,
                    total_rate: total,
                    waiting_time: 1.0 / total,
                });
            }
        }
    }
    // Only reachable through rounding in the running sum.
    Ok(Jump {
        index: last_positive,
        total_rate: total,
        waiting_time: 1.0 / total,
    })
}

fn holding_time<R: Rng + ?Sized>(jump: &Jump, cfg: &CtConfig, rng: &mut R) -> f64 {
    if cfg.sampled_waiting_times {
        Exp::new(jump.total_rate)
            .expect("positive rate")
            .sample(rng)
    } else {
        jump.waiting_time
    }
}

pub fn ct_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &ChainContext<'_>,
    cfg: &CtConfig,
    iteration: u64,
    rng: &mut R,
) -> Result<ChainRecord, SamplerError> {
    if cfg.full_conditional {
        ct_step_full(state, ctx, cfg, iteration, rng)
    } else {
        ct_step_marginal(state, ctx, cfg, iteration, rng)
    }
}

/// One jump with terminal values integrated out, followed by the optional
/// perturbation sweep and a Gibbs refresh of the noise variance.
pub fn ct_step_marginal<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &ChainContext<'_>,
    cfg: &CtConfig,
    iteration: u64,
    rng: &mut R,
) -> Result<ChainRecord, SamplerError> {
    let fit = TreeFit::new(state.tree.clone(), ctx.data, ctx.prior, state.sigma2);
    let candidates = apply_family_weights(enumerate_candidates(&fit, cfg.moves, cfg.parallel), cfg);
    let jump =
        select_jump(&candidates, rng).map_err(|_| SamplerError::Stuck(state.tree.canonical()))?;
    let waiting_time = holding_time(&jump, cfg, rng);
    let mv = candidates[jump.index].mv;
    let record = ChainRecord {
        iteration,
        tree: state.tree.clone(),
        sigma2: state.sigma2,
        waiting_time,
        move_kind: mv.kind(),
    };
    state.tree = mv.apply(&state.tree)?;
    if cfg.perturb {
        state.tree = perturb_step(&state.tree, ctx.data, ctx.prior, state.sigma2, rng).0;
    }
    if ctx.update_sigma2 {
        state.sigma2 = gibbs_sigma2(&state.tree, ctx.data, state.sigma2, ctx.prior, rng);
    }
    Ok(record)
}

/// Log density of the terminal-value proposal: the conditional posterior of
/// the value given its cell.
pub fn mu_proposal_log_density(cell: &CellStats, sigma2: f64, prior: &PriorConfig, mu: f64) -> f64 {
    let (mean, var) = leaf_posterior(cell, sigma2, prior);
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (mu - mean).powi(2) / (2.0 * var)
}

pub fn draw_mu_proposal<R: Rng + ?Sized>(
    cell: &CellStats,
    sigma2: f64,
    prior: &PriorConfig,
    rng: &mut R,
) -> f64 {
    let (mean, var) = leaf_posterior(cell, sigma2, prior);
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

/// Values and statistics of the cells involved in splitting a parent cell
/// into two children.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitValues {
    pub parent: CellStats,
    pub mu_parent: f64,
    pub left: CellStats,
    pub mu_left: f64,
    pub right: CellStats,
    pub mu_right: f64,
}

/// Log of `Pr(T_b, theta_b | D) q(mu_parent) / (Pr(T, theta | D) q(mu_left) q(mu_right))`
/// with explicit terminal values, where `T_b` splits the parent cell of `T`.
/// The birth rate is `min{1, exp(.)}`, the matching death rate
/// `min{1, exp(-.)}`. `log_prior_ratio` is the tree-prior change of the split.
pub fn full_split_log_ratio(
    v: &SplitValues,
    model: &CellModel,
    prior: &PriorConfig,
    log_prior_ratio: f64,
    min_node_size: usize,
) -> f64 {
    if v.left.count < min_node_size || v.right.count < min_node_size {
        return f64::NEG_INFINITY;
    }
    let s2 = model.sigma2;
    let split = model.log_full(&v.left, v.mu_left)
        + model.log_full(&v.right, v.mu_right)
        + log_mu_prior(v.mu_left, prior)
        + log_mu_prior(v.mu_right, prior);
    let merged = model.log_full(&v.parent, v.mu_parent) + log_mu_prior(v.mu_parent, prior);
    split - merged + log_prior_ratio + mu_proposal_log_density(&v.parent, s2, prior, v.mu_parent)
        - mu_proposal_log_density(&v.left, s2, prior, v.mu_left)
        - mu_proposal_log_density(&v.right, s2, prior, v.mu_right)
}

/// Candidate list with explicit terminal values: each birth draws fresh
/// child values and each death a fresh merged value, in candidate order.
/// Rotations keep the marginal rate. Returns the candidates and, per
/// candidate, the proposed values `(a, b)` (birth: left/right; death: merged).
pub fn enumerate_full<R: Rng + ?Sized>(
    fit: &TreeFit<'_>,
    mode: MoveSet,
    rng: &mut R,
) -> (Vec<MoveCandidate>, Vec<(f64, f64)>) {
    let tree = &fit.tree;
    let data = fit.data;
    let prior = fit.prior;
    let s2 = fit.sigma2();
    let min = fit.min_node_size();
    let mut cands = Vec::new();
    let mut values = Vec::new();
    for leaf in tree.terminal_nodes() {
        let parent = fit.stats.get(leaf);
        let mu_parent = tree.mu(leaf).expect("terminal values present");
        for var in 0..data.d() {
            let lp = log_birth_prior_ratio(fit.depth(leaf), data.d(), data.n_cuts(var), prior);
            for (cut, left, right) in usable_splits(fit.stats.members(leaf), var, data, min) {
                let mu_left = draw_mu_proposal(&left, s2, prior, rng);
                let mu_right = draw_mu_proposal(&right, s2, prior, rng);
                let v = SplitValues {
                    parent,
                    mu_parent,
                    left,
                    mu_left,
                    right,
                    mu_right,
                };
                let r = full_split_log_ratio(&v, &fit.model, prior, lp, min);
                cands.push(MoveCandidate {
                    mv: Move::Birth {
                        leaf,
                        rule: SplitRule::new(var, cut),
                    },
                    log_rate: clamp(r),
                });
                values.push((mu_left, mu_right));
            }
        }
    }
    for node in tree.death_candidates() {
        let (l, r) = tree.children(node).expect("nog");
        let (left, right, parent) = fit.death_stats(node);
        let mu_parent = draw_mu_proposal(&parent, s2, prior, rng);
        let rule = tree.rule(node).expect("nog");
        let lp = log_birth_prior_ratio(fit.depth(node), data.d(), data.n_cuts(rule.var), prior);
        let v = SplitValues {
            parent,
            mu_parent,
            left,
            mu_left: tree.mu(l).expect("terminal values present"),
            right,
            mu_right: tree.mu(r).expect("terminal values present"),
        };
        let r = full_split_log_ratio(&v, &fit.model, prior, lp, min);
        cands.push(MoveCandidate {
            mv: Move::Death { node },
            log_rate: clamp(-r),
        });
        values.push((mu_parent, mu_parent));
    }
    if mode == MoveSet::BirthDeathRotate {
        for (node, dir) in tree.rotate_candidates() {
            cands.push(MoveCandidate {
                mv: Move::Rotate { node, dir },
                log_rate: clamp(fit.rotate_log_ratio(node, dir)),
            });
            values.push((f64::NAN, f64::NAN));
        }
    }
    (cands, values)
}

/// One jump of the sampler that carries terminal values: values proposed
/// per candidate, jump drawn, then all values and the noise variance
/// refreshed by Gibbs.
pub fn ct_step_full<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &ChainContext<'_>,
    cfg: &CtConfig,
    iteration: u64,
    rng: &mut R,
) -> Result<ChainRecord, SamplerError> {
    let fit = TreeFit::new(state.tree.clone(), ctx.data, ctx.prior, state.sigma2);
    let (cands, values) = enumerate_full(&fit, cfg.moves, rng);
    let (bd, rot) = cfg.family_weights();
    let weighted: Vec<MoveCandidate> = cands
        .iter()
        .map(|c| {
            let w = if c.mv.kind() == MoveKind::Rotate {
                rot
            } else {
                bd
            };
            MoveCandidate {
                mv: c.mv,
                log_rate: c.log_rate + w.ln(),
            }
        })
        .collect();
    let jump =
        select_jump(&weighted, rng).map_err(|_| SamplerError::Stuck(state.tree.canonical()))?;
    let waiting_time = holding_time(&jump, cfg, rng);
    let mv = weighted[jump.index].mv;
    let record = ChainRecord {
        iteration,
        tree: state.tree.clone(),
        sigma2: state.sigma2,
        waiting_time,
        move_kind: mv.kind(),
    };
    let (mut tree, map) = mv.apply_mapped(&state.tree)?;
    let (a, b) = values[jump.index];
    match mv {
        Move::Birth { leaf, .. } => {
            let (l, r) = tree
                .children(map[leaf.0].expect("split leaf"))
                .expect("new split");
            tree.set_mu(l, Some(a))?;
            tree.set_mu(r, Some(b))?;
        }
        Move::Death { node } => tree.set_mu(map[node.0].expect("collapsed node"), Some(a))?,
        Move::Rotate { .. } => {}
    }
    if cfg.perturb {
        tree = perturb_step(&tree, ctx.data, ctx.prior, state.sigma2, rng).0;
    }
    let stats = SuffStats::compute(&tree, ctx.data);
    tree = draw_leaf_values(&tree, &stats, state.sigma2, ctx.prior, rng);
    if ctx.update_sigma2 {
        state.sigma2 = sample_sigma2(residual_ss(&tree, &stats), ctx.data.n(), ctx.prior, rng);
    }
    state.tree = tree;
    Ok(record)
}
