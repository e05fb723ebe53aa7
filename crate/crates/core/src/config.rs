//! Sampler variants and run configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DEFAULT_MIN_NODE_SIZE;
use crate::prior::{PriorConfig, PriorError};

/// The six benchmarked samplers. `A` uses birth and death moves, `B` adds
/// rotations and `C` adds a cutpoint perturbation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "RJ-A")]
    RjA,
    #[serde(rename = "RJ-B")]
    RjB,
    #[serde(rename = "RJ-C")]
    RjC,
    #[serde(rename = "CT-A")]
    CtA,
    #[serde(rename = "CT-B")]
    CtB,
    #[serde(rename = "CT-C")]
    CtC,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::RjA,
        Algorithm::RjB,
        Algorithm::RjC,
        Algorithm::CtA,
        Algorithm::CtB,
        Algorithm::CtC,
    ];

    pub fn is_continuous_time(self) -> bool {
        matches!(self, Algorithm::CtA | Algorithm::CtB | Algorithm::CtC)
    }

    pub fn uses_rotate(self) -> bool {
        !matches!(self, Algorithm::RjA | Algorithm::CtA)
    }

    pub fn uses_perturb(self) -> bool {
        matches!(self, Algorithm::RjC | Algorithm::CtC)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RjA => "RJ-A",
            Algorithm::RjB => "RJ-B",
            Algorithm::RjC => "RJ-C",
            Algorithm::CtA => "CT-A",
            Algorithm::CtB => "CT-B",
            Algorithm::CtC => "CT-C",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown algorithm {0:?} (expected one of RJ-A, RJ-B, RJ-C, CT-A, CT-B, CT-C)")]
    UnknownAlgorithm(String),
    #[error("burn-in {burnin} must be smaller than the iteration count {iterations}")]
    Burnin { burnin: u64, iterations: u64 },
    #[error("replications must be at least 1")]
    Replications,
    #[error("alpha_mix must lie in [0, 1], got {0}")]
    AlphaMix(f64),
    #[error("min_node_size must be at least 1")]
    MinNodeSize,
    #[error("fixed sigma2 must be positive, got {0}")]
    Sigma2(f64),
    #[error("move weights must be finite, non-negative and give birth and death positive weights, got {0:?}")]
    MoveWeights(MoveWeights),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// Relative proposal frequencies of the discrete-time move kinds. Kinds not
/// available at the current tree are left out and the rest renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveWeights {
    pub birth: f64,
    pub death: f64,
    pub rotate: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        MoveWeights {
            birth: 1.0,
            death: 1.0,
            rotate: 1.0,
        }
    }
}

impl MoveWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = [self.birth, self.death, self.rotate]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
            && self.birth > 0.0
            && self.death > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ConfigError::MoveWeights(*self))
        }
    }
}

impl FromStr for Algorithm {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| ConfigError::UnknownAlgorithm(s.to_string()))
    }
}

fn default_alpha_mix() -> f64 {
    0.5
}

fn default_min_node_size() -> usize {
    DEFAULT_MIN_NODE_SIZE
}

fn default_replications() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// One sampler run (or a batch of replications of it).
///
/// `prior: None` calibrates the prior from the training response.
/// `threads: None` lets the thread pool pick. `fixed_sigma2` pins the noise
/// variance instead of updating it by Gibbs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub iterations: u64,
    #[serde(default)]
    pub burnin: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha_mix")]
    pub alpha_mix: f64,
    #[serde(default)]
    pub prior: Option<PriorConfig>,
    #[serde(default = "default_min_node_size")]
    pub min_node_size: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub fixed_sigma2: Option<f64>,
    /// Run the continuous-time samplers with explicit terminal values.
    #[serde(default)]
    pub full_conditional: bool,
    /// Record exponential draws instead of expected holding times.
    #[serde(default)]
    pub sampled_waiting_times: bool,
    #[serde(default = "default_true")]
    pub parallel_candidates: bool,
    /// Move-kind mixture of the reversible-jump samplers.
    #[serde(default)]
    pub rj_move_weights: MoveWeights,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, iterations: u64) -> Self {
        RunConfig {
            algorithm,
            iterations,
            burnin: 0,
            seed: 0,
            alpha_mix: default_alpha_mix(),
            prior: None,
            min_node_size: DEFAULT_MIN_NODE_SIZE,
            threads: None,
            replications: 1,
            fixed_sigma2: None,
            full_conditional: false,
            sampled_waiting_times: false,
            parallel_candidates: true,
            rj_move_weights: MoveWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.iterations > 0 && self.burnin >= self.iterations {
            return Err(ConfigError::Burnin {
                burnin: self.burnin,
                iterations: self.iterations,
            });
        }
        if self.replications == 0 {
            return Err(ConfigError::Replications);
        }
        if !(0.0..=1.0).contains(&self.alpha_mix) {
            return Err(ConfigError::AlphaMix(self.alpha_mix));
        }
        if self.min_node_size == 0 {
            return Err(ConfigError::MinNodeSize);
        }
        if let Some(s) = self.fixed_sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ConfigError::Sigma2(s));
            }
        }
        self.rj_move_weights.validate()?;
        if let Some(p) = &self.prior {
            p.validate()?;
        }
        Ok(())
    }
}
