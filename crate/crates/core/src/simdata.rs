//! Three-region benchmark data with confounded covariates.
//!
//! Rows come in three equal blocks. Blocks one and two have `x1` in
//! `[0.1, 0.4]` and `x3` in `[0.6, 0.9]`; block three has the reverse, so
//! `x1 <= 0.5` exactly when `x3 > 0.5`. `x2` is low in block one, high in
//! block two and spread over `[0.1, 0.9]` in block three. The mean response
//! is 1, 3 and 5 on the three regions.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::chain_rng;
use crate::data::{DataError, Dataset, EvalSet, DEFAULT_MIN_NODE_SIZE};

/// Streams used for training and held-out data, far away from the chain
/// streams `0, 1, 2, ...` of the replications.
pub const TRAIN_STREAM: u64 = 1 << 33;
pub const TEST_STREAM: u64 = 1 << 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("sample size {0} must be a positive multiple of 3")]
    SampleSize(usize),
    #[error("noise variance must be positive, got {0}")]
    Sigma2(f64),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub sigma2: f64,
    pub seed: u64,
    pub n_cut: usize,
    pub min_node_size: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 300,
            sigma2: 1.0,
            seed: 0,
            n_cut: 100,
            min_node_size: DEFAULT_MIN_NODE_SIZE,
        }
    }
}

/// Training data plus the noiseless regression function at each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub data: Dataset,
    pub truth: Vec<f64>,
}

impl SimData {
    pub fn eval_set(&self) -> EvalSet {
        EvalSet::from_dataset(&self.data, Some(self.truth.clone()))
    }
}

pub fn regression_function(x1: f64, x2: f64) -> f64 {
    if x1 > 0.5 {
        5.0
    } else if x2 <= 0.5 {
        1.0
    } else {
        3.0
    }
}

fn sample<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<SimData, SimError> {
    if cfg.n == 0 || !cfg.n.is_multiple_of(3) {
        return Err(SimError::SampleSize(cfg.n));
    }
    if !(cfg.sigma2 > 0.0 && cfg.sigma2.is_finite()) {
        return Err(SimError::Sigma2(cfg.sigma2));
    }
    let block = cfg.n / 3;
    let (mut x1, mut x2, mut x3) = (Vec::new(), Vec::new(), Vec::new());
    let (low, high, wide) = ((0.1, 0.4), (0.6, 0.9), (0.1, 0.9));
    for i in 0..cfg.n {
        let b = i / block;
        let (r1, r2, r3) = match b {
            0 => (low, low, high),
            1 => (low, high, high),
            _ => (high, wide, low),
        };
        x1.push(rng.random_range(r1.0..=r1.1));
        x2.push(rng.random_range(r2.0..=r2.1));
        x3.push(rng.random_range(r3.0..=r3.1));
    }
    let noise = Normal::new(0.0, cfg.sigma2.sqrt()).expect("positive sd");
    let truth: Vec<f64> = x1
        .iter()
        .zip(&x2)
        .map(|(a, b)| regression_function(*a, *b))
        .collect();
    let y = truth.iter().map(|f| f + noise.sample(rng)).collect();
    let data = Dataset::with_uniform_grid(vec![x1, x2, x3], y, cfg.n_cut, cfg.min_node_size)?;
    Ok(SimData { data, truth })
}

/// Training set drawn from its own stream of the seed.
pub fn generate(cfg: &SimConfig) -> Result<SimData, SimError> {
    sample(cfg, &mut chain_rng(cfg.seed, TRAIN_STREAM))
}

/// Independent test set of the same design from a separate stream.
pub fn generate_test(cfg: &SimConfig) -> Result<SimData, SimError> {
    sample(cfg, &mut chain_rng(cfg.seed, TEST_STREAM))
}

/// Small problem for exhaustive checks: `n` evenly spaced points on one
/// variable, a unit step at 0.5 plus unit noise, cutpoints at 1/3 and 2/3.
/// With the default twenty points and a minimum node size of five, every
/// tree has depth at most two.
pub fn step_toy(n: usize, seed: u64, min_node_size: usize) -> Result<Dataset, SimError> {
    if n == 0 {
        return Err(SimError::SampleSize(n));
    }
    let mut rng = chain_rng(seed, 0);
    let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let y = x
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (if *x < 0.5 { 0.0 } else { 1.0 }) + z
        })
        .collect();
    Ok(Dataset::new(
        vec![x],
        y,
        vec![vec![1.0 / 3.0, 2.0 / 3.0]],
        min_node_size,
    )?)
}
