//! Discrete-time reversible-jump baselines.
//!
//! Each step picks a move kind among those available (uniformly by
//! default, otherwise in proportion to the configured weights), proposes one
//! move of that kind and accepts it by Metropolis-Hastings on the marginal
//! tree posterior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainContext, ChainRecord, ChainState, SamplerError};
use crate::config::{Algorithm, MoveWeights, RunConfig};
use crate::likelihood::{count_usable, usable_splits};
use crate::moves::{Move, MoveKind};
use crate::posterior::{perturb_step, PerturbStats, TreeFit};
use crate::prior::gibbs_sigma2;
use crate::tree::{SplitRule, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RjVariant {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RjConfig {
    pub variant: RjVariant,
    pub weights: MoveWeights,
}

impl RjConfig {
    pub fn from_run(run: &RunConfig) -> Self {
        let variant = match run.algorithm {
            Algorithm::RjB | Algorithm::CtB => RjVariant::B,
            Algorithm::RjC | Algorithm::CtC => RjVariant::C,
            Algorithm::RjA | Algorithm::CtA => RjVariant::A,
        };
        RjConfig {
            variant,
            weights: run.rj_move_weights,
        }
    }

    pub fn rotate(&self) -> bool {
        self.variant != RjVariant::A
    }

    pub fn perturb(&self) -> bool {
        self.variant == RjVariant::C
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProposalKind {
    Birth,
    Death,
    Rotate,
    Perturb,
}

/// A proposed move with the log probabilities of proposing it and of
/// proposing its reverse from the resulting tree.
#[derive(Debug, Clone, PartialEq)]
pub struct RjProposal {
    pub kind: ProposalKind,
    pub mv: Move,
    pub forward_log_density: f64,
    pub reverse_log_density: f64,
    pub log_posterior_ratio: f64,
}

impl RjProposal {
    pub fn log_acceptance(&self) -> f64 {
        (self.log_posterior_ratio + self.reverse_log_density - self.forward_log_density).min(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RjCounters {
    pub proposed: u64,
    pub accepted: u64,
    /// Births with no usable cutpoint: the chain stays put.
    pub forced_stays: u64,
    pub perturb: PerturbStats,
}

/// Move kinds that can be proposed from `tree`.
pub fn available_kinds(tree: &Tree, rotate: bool) -> Vec<ProposalKind> {
    let mut kinds = vec![ProposalKind::Birth];
    if tree.n_internal() > 0 {
        kinds.push(ProposalKind::Death);
    }
    if rotate && !tree.rotate_candidates().is_empty() {
        kinds.push(ProposalKind::Rotate);
    }
    kinds
}

fn ln(n: usize) -> f64 {
    (n as f64).ln()
}

fn kind_weight(kind: ProposalKind, w: &MoveWeights) -> f64 {
    match kind {
        ProposalKind::Birth => w.birth,
        ProposalKind::Death => w.death,
        ProposalKind::Rotate | ProposalKind::Perturb => w.rotate,
    }
}

fn uniform(kinds: &[ProposalKind], w: &MoveWeights) -> bool {
    kinds
        .iter()
        .all(|k| kind_weight(*k, w) == kind_weight(kinds[0], w))
}

/// Log probability of choosing `kind` at a tree offering `kinds`.
fn kind_log_prob(kinds: &[ProposalKind], kind: ProposalKind, w: &MoveWeights) -> f64 {
    if uniform(kinds, w) {
        return -ln(kinds.len());
    }
    let total: f64 = kinds.iter().map(|k| kind_weight(*k, w)).sum();
    (kind_weight(kind, w) / total).ln()
}

fn choose_kind<R: Rng + ?Sized>(
    kinds: &[ProposalKind],
    w: &MoveWeights,
    rng: &mut R,
) -> ProposalKind {
    if uniform(kinds, w) {
        return kinds[rng.random_range(0..kinds.len())];
    }
    let total: f64 = kinds.iter().map(|k| kind_weight(*k, w)).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for k in kinds {
        acc += kind_weight(*k, w);
        if u < acc {
            return *k;
        }
    }
    kinds[0]
}

/// Draw one proposal. `None` means a birth was drawn at a leaf/variable
/// without usable cutpoints.
pub fn propose<R: Rng + ?Sized>(
    fit: &TreeFit<'_>,
    cfg: &RjConfig,
    rng: &mut R,
) -> Option<RjProposal> {
    let tree = &fit.tree;
    let data = fit.data;
    let min = fit.min_node_size();
    let kinds = available_kinds(tree, cfg.rotate());
    let w = &cfg.weights;
    let kind = choose_kind(&kinds, w, rng);
    let pick = kind_log_prob(&kinds, kind, w);
    let reverse_pick =
        |next: &Tree, k: ProposalKind| kind_log_prob(&available_kinds(next, cfg.rotate()), k, w);
    match kind {
        ProposalKind::Birth => {
            let leaves = tree.terminal_nodes();
            let leaf = leaves[rng.random_range(0..leaves.len())];
            let var = rng.random_range(0..data.d());
            let usable = usable_splits(fit.stats.members(leaf), var, data, min);
            if usable.is_empty() {
                return None;
            }
            let cut = usable[rng.random_range(0..usable.len())].0;
            let mv = Move::Birth {
                leaf,
                rule: SplitRule::new(var, cut),
            };
            let next = mv.apply(tree).expect("terminal leaf");
            let forward = pick - ln(leaves.len()) - ln(data.d()) - ln(usable.len());
            let reverse =
                reverse_pick(&next, ProposalKind::Death) - ln(next.death_candidates().len());
            Some(RjProposal {
                kind,
                mv,
                forward_log_density: forward,
                reverse_log_density: reverse,
                log_posterior_ratio: fit.birth_log_ratio(leaf, mv_rule(&mv)),
            })
        }
        ProposalKind::Death => {
            let nogs = tree.death_candidates();
            let node = nogs[rng.random_range(0..nogs.len())];
            let mv = Move::Death { node };
            let next = mv.apply(tree).expect("nog node");
            let (l, r) = tree.children(node).expect("nog node");
            let mut rows = fit.stats.members(l).to_vec();
            rows.extend_from_slice(fit.stats.members(r));
            let var = tree.rule(node).expect("nog node").var;
            let forward = pick - ln(nogs.len());
            let reverse = reverse_pick(&next, ProposalKind::Birth)
                - ln(next.n_terminal())
                - ln(data.d())
                - ln(count_usable(&rows, var, data, min));
            Some(RjProposal {
                kind,
                mv,
                forward_log_density: forward,
                reverse_log_density: reverse,
                log_posterior_ratio: fit.death_log_ratio(node),
            })
        }
        ProposalKind::Rotate | ProposalKind::Perturb => {
            let rots = tree.rotate_candidates();
            let (node, dir) = rots[rng.random_range(0..rots.len())];
            let mv = Move::Rotate { node, dir };
            let (ratio, next) = fit.rotate(node, dir);
            let forward = pick - ln(rots.len());
            let reverse = reverse_pick(&next.tree, ProposalKind::Rotate)
                - ln(next.tree.rotate_candidates().len());
            Some(RjProposal {
                kind: ProposalKind::Rotate,
                mv,
                forward_log_density: forward,
                reverse_log_density: reverse,
                log_posterior_ratio: ratio,
            })
        }
    }
}

fn mv_rule(mv: &Move) -> SplitRule {
    match mv {
        Move::Birth { rule, .. } => *rule,
        _ => unreachable!("birth move"),
    }
}

/// One reversible-jump step, then the optional perturbation sweep and the
/// noise-variance refresh. The record holds the state after the step.
pub fn rj_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &ChainContext<'_>,
    cfg: &RjConfig,
    iteration: u64,
    counters: &mut RjCounters,
    rng: &mut R,
) -> Result<ChainRecord, SamplerError> {
    let fit = TreeFit::new(state.tree.clone(), ctx.data, ctx.prior, state.sigma2);
    let mut kind = MoveKind::Stay;
    match propose(&fit, cfg, rng) {
        None => counters.forced_stays += 1,
        Some(p) => {
            counters.proposed += 1;
            let log_a = p.log_acceptance();
            let accept =
                log_a == 0.0 || (log_a > f64::NEG_INFINITY && rng.random::<f64>().ln() < log_a);
            if accept {
                counters.accepted += 1;
                state.tree = p.mv.apply(&state.tree)?;
                kind = p.mv.kind();
            }
        }
    }
    if cfg.perturb() {
        let (tree, stats) = perturb_step(&state.tree, ctx.data, ctx.prior, state.sigma2, rng);
        counters.perturb.proposed += stats.proposed;
        counters.perturb.accepted += stats.accepted;
        state.tree = tree;
    }
    if ctx.update_sigma2 {
        state.sigma2 = gibbs_sigma2(&state.tree, ctx.data, state.sigma2, ctx.prior, rng);
    }
    Ok(ChainRecord {
        iteration,
        tree: state.tree.clone(),
        sigma2: state.sigma2,
        waiting_time: 1.0,
        move_kind: kind,
    })
}
