//! Tree prior, terminal-value prior and the noise-variance prior.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::likelihood::{CellStats, SuffStats};
use crate::tree::{Node, Tree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("beta must be non-negative, got {0}")]
    Beta(f64),
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
}

/// Hyperparameters of the tree, terminal-value and variance priors.
///
/// A node at depth `d` splits with probability `alpha / (1 + d)^beta`
/// (zero at or beyond `max_depth` when set). Terminal values are iid
/// `N(0, sigma_mu^2)`; the noise variance is `IG(nu / 2, nu * lambda / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_mu: f64,
    pub nu: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            alpha: 0.95,
            beta: 2.0,
            sigma_mu: 1.0,
            nu: 3.0,
            lambda: 1.0,
            max_depth: None,
        }
    }
}

/// Mass the calibrated variance prior puts below the sample variance.
pub const SIGMA_QUANTILE: f64 = 0.9;
/// Number of prior standard deviations spanning half the response range.
pub const SIGMA_MU_K: f64 = 2.0;

impl PriorConfig {
    pub fn validate(&self) -> Result<(), PriorError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PriorError::Alpha(self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(PriorError::Beta(self.beta));
        }
        for (name, value) in [
            ("sigma_mu", self.sigma_mu),
            ("nu", self.nu),
            ("lambda", self.lambda),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PriorError::NotPositive { name, value });
            }
        }
        Ok(())
    }

    /// Data-guided defaults: `alpha = 0.95`, `beta = 2`, `nu = 3`,
    /// `lambda` such that `P(sigma^2 < var(y)) = 0.9`, and
    /// `sigma_mu = (max y - min y) / (2k)` with `k = 2`.
    pub fn calibrated(response: &[f64]) -> Self {
        let mut cfg = PriorConfig::default();
        let var = crate::data::sample_variance(response);
        if var > 0.0 {
            cfg.lambda = calibrate_lambda(cfg.nu, var, SIGMA_QUANTILE);
        }
        let (lo, hi) = response
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                (lo.min(y), hi.max(y))
            });
        if hi > lo {
            cfg.sigma_mu = (hi - lo) / (2.0 * SIGMA_MU_K);
        }
        cfg
    }

    /// Prior probability that a node at `depth` is internal.
    pub fn p_split(&self, depth: usize) -> f64 {
        if self.max_depth.is_some_and(|m| depth >= m) {
            return 0.0;
        }
        self.alpha / (1.0 + depth as f64).powf(self.beta)
    }
}

/// `lambda` such that `IG(nu/2, nu*lambda/2)` has CDF `quantile` at `target`.
/// Bisection on the inverse-gamma CDF.
pub fn calibrate_lambda(nu: f64, target: f64, quantile: f64) -> f64 {
    let cdf = |lambda: f64| statrs::function::gamma::gamma_ur(nu / 2.0, nu * lambda / 2.0 / target);
    // The CDF at `target` decreases in lambda.
    let (mut lo, mut hi) = (target * 1e-8, target * 1e4);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if cdf(mid) > quantile {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Log prior of a tree's topology and rules.
pub fn log_tree_prior(tree: &Tree, data: &Dataset, cfg: &PriorConfig) -> f64 {
    let depths = tree.depths();
    let ln_d = (data.d() as f64).ln();
    tree.nodes()
        .iter()
        .zip(depths)
        .map(|(node, depth)| {
            let p = cfg.p_split(depth);
            match node {
                Node::Internal { rule, .. } => p.ln() - ln_d - (data.n_cuts(rule.var) as f64).ln(),
                Node::Terminal { .. } => (1.0 - p).ln(),
            }
        })
        .sum()
}

/// Change in log tree prior when a leaf at `depth` splits on a variable
/// with `n_cuts` grid points, out of `n_vars` variables.
pub fn log_birth_prior_ratio(depth: usize, n_vars: usize, n_cuts: usize, cfg: &PriorConfig) -> f64 {
    let p = cfg.p_split(depth);
    let p_child = cfg.p_split(depth + 1);
    p.ln() + 2.0 * (1.0 - p_child).ln()
        - (1.0 - p).ln()
        - (n_vars as f64).ln()
        - (n_cuts as f64).ln()
}

pub fn log_mu_prior(mu: f64, cfg: &PriorConfig) -> f64 {
    let var = cfg.sigma_mu * cfg.sigma_mu;
    -0.5 * (2.0 * PI * var).ln() - mu * mu / (2.0 * var)
}

/// Conditional posterior `(mean, variance)` of a terminal value given its
/// cell and the noise variance.
pub fn leaf_posterior(stats: &CellStats, sigma2: f64, cfg: &PriorConfig) -> (f64, f64) {
    let prior_var = cfg.sigma_mu * cfg.sigma_mu;
    let var = 1.0 / (stats.count as f64 / sigma2 + 1.0 / prior_var);
    (var * stats.sum / sigma2, var)
}

/// Gibbs draw of the noise variance: `IG((nu + n)/2, (nu*lambda + ssr)/2)`.
pub fn sample_sigma2<R: Rng + ?Sized>(ssr: f64, n: usize, cfg: &PriorConfig, rng: &mut R) -> f64 {
    let shape = (cfg.nu + n as f64) / 2.0;
    let rate = (cfg.nu * cfg.lambda + ssr) / 2.0;
    let gamma = Gamma::new(shape, 1.0 / rate).expect("valid inverse-gamma parameters");
    1.0 / gamma.sample(rng)
}

/// Draw every terminal value from its conditional posterior.
pub fn draw_leaf_values<R: Rng + ?Sized>(
    tree: &Tree,
    stats: &SuffStats,
    sigma2: f64,
    cfg: &PriorConfig,
    rng: &mut R,
) -> Tree {
    let mut out = tree.clone();
    for leaf in tree.terminal_nodes() {
        let cell = stats.get(leaf);
        let (mean, var) = leaf_posterior(&cell, sigma2, cfg);
        let z: f64 = StandardNormal.sample(rng);
        out.set_mu(leaf, Some(mean + var.sqrt() * z))
            .expect("terminal node");
    }
    out
}

/// Residual sum of squares of a tree whose terminals all carry values.
pub fn residual_ss(tree: &Tree, stats: &SuffStats) -> f64 {
    stats
        .iter()
        .map(|(leaf, cell)| {
            let mu = tree.mu(leaf).expect("terminal value");
            cell.sum_sq - 2.0 * mu * cell.sum + cell.count as f64 * mu * mu
        })
        .sum::<f64>()
        .max(0.0)
}

/// Gibbs refresh of the noise variance. Trees without terminal values get a
/// fresh conditional-posterior draw of them first (discarded afterwards).
pub fn gibbs_sigma2<R: Rng + ?Sized>(
    tree: &Tree,
    data: &Dataset,
    sigma2: f64,
    cfg: &PriorConfig,
    rng: &mut R,
) -> f64 {
    let stats = SuffStats::compute(tree, data);
    let ssr = match tree.has_values() {
        Some(true) => residual_ss(tree, &stats),
        _ => residual_ss(&draw_leaf_values(tree, &stats, sigma2, cfg, rng), &stats),
    };
    sample_sigma2(ssr, data.n(), cfg, rng)
}
