//! Exhaustive enumeration of small tree spaces and their exact posterior.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::data::Dataset;
use crate::likelihood::log_marginal_likelihood;
use crate::prior::{log_tree_prior, PriorConfig};
use crate::tree::Tree;

/// Largest space the oracle will enumerate.
pub const MAX_TREES: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("the tree space holds more than {limit} trees")]
    TooLarge { limit: usize },
}

/// Number of trees of depth at most `max_depth` with `n_rules` distinct
/// split rules, or `None` past `limit`.
pub fn count_trees(n_rules: usize, max_depth: usize, limit: usize) -> Option<usize> {
    let mut count: usize = 1;
    for _ in 0..max_depth {
        count = count
            .checked_mul(count)
            .and_then(|c| c.checked_mul(n_rules))
            .and_then(|c| c.checked_add(1))
            .filter(|c| *c <= limit)?;
    }
    Some(count)
}

/// Every tree of depth at most `max_depth` over the data's rules, in
/// canonical form.
pub fn enumerate_trees(data: &Dataset, max_depth: usize) -> Result<Vec<Tree>, OracleError> {
    let rules: Vec<(usize, usize)> = (0..data.d())
        .flat_map(|v| (0..data.n_cuts(v)).map(move |c| (v, c)))
        .collect();
    count_trees(rules.len(), max_depth, MAX_TREES)
        .ok_or(OracleError::TooLarge { limit: MAX_TREES })?;
    let mut level = vec!["T".to_string()];
    for _ in 0..max_depth {
        let mut next = vec!["T".to_string()];
        for (v, c) in &rules {
            for l in &level {
                for r in &level {
                    next.push(format!("I(v={v},c={c},{l},{r})"));
                }
            }
        }
        level = next;
    }
    Ok(level
        .iter()
        .map(|s| s.parse().expect("well-formed canonical string"))
        .collect())
}

/// Normalized marginal posterior over an enumerated space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    pub trees: Vec<Tree>,
    pub log_posterior: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ExactPosterior {
    /// Probability by canonical tree string (trees of zero mass included).
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        self.trees
            .iter()
            .map(|t| t.canonical())
            .zip(self.probabilities.iter().copied())
            .collect()
    }

    /// Trees with positive mass.
    pub fn support(&self) -> Vec<&Tree> {
        self.trees
            .iter()
            .zip(&self.probabilities)
            .filter(|(_, p)| **p > 0.0)
            .map(|(t, _)| t)
            .collect()
    }
}

pub fn exact_posterior(
    data: &Dataset,
    prior: &PriorConfig,
    sigma2: f64,
    max_depth: usize,
) -> Result<ExactPosterior, OracleError> {
    let trees = enumerate_trees(data, max_depth)?;
    let log_posterior: Vec<f64> = trees
        .iter()
        .map(|t| {
            let ll = log_marginal_likelihood(t, data, sigma2, prior);
            if ll == f64::NEG_INFINITY {
                ll
            } else {
                ll + log_tree_prior(t, data, prior)
            }
        })
        .collect();
    let max = log_posterior
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_posterior.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    let probabilities = unnorm.iter().map(|u| u / z).collect();
    Ok(ExactPosterior {
        trees,
        log_posterior,
        probabilities,
    })
}

/// Total-variation distance between two distributions keyed by tree.
pub fn total_variation(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let mut keys: Vec<&String> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy() -> Dataset {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 + 0.5) / 20.0).collect();
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.4).sin()).collect();
        Dataset::new(vec![x], y, vec![vec![1.0 / 3.0, 2.0 / 3.0]], 5).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(count_trees(2, 0, MAX_TREES), Some(1));
        assert_eq!(count_trees(2, 1, MAX_TREES), Some(3));
        assert_eq!(count_trees(2, 2, MAX_TREES), Some(19));
        assert_eq!(count_trees(300, 3, MAX_TREES), None);
        let trees = enumerate_trees(&toy(), 2).unwrap();
        assert_eq!(trees.len(), 19);
        let mut names: Vec<String> = trees.iter().map(|t| t.canonical()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 19);
    }

    #[test]
    fn depth_zero_is_a_point_mass() {
        let post = exact_posterior(&toy(), &PriorConfig::default(), 1.0, 0).unwrap();
        assert_eq!(post.probabilities, vec![1.0]);
    }

    #[test]
    fn toy_posterior_is_normalized_over_five_trees() {
        let post = exact_posterior(&toy(), &PriorConfig::default(), 1.0, 2).unwrap();
        assert_abs_diff_eq!(post.probabilities.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // Root, two stumps, two nested pairs: cells of 7, 6 and 7 rows.
        assert_eq!(post.support().len(), 5);
    }

    #[test]
    fn tv_distance() {
        let p: BTreeMap<String, f64> = [("a".into(), 0.5), ("b".into(), 0.5)].into();
        let q: BTreeMap<String, f64> = [("a".into(), 1.0)].into();
        assert_abs_diff_eq!(total_variation(&p, &q), 0.5);
        assert_eq!(total_variation(&p, &p), 0.0);
    }
}
