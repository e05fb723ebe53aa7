//! Bayesian regression trees sampled with continuous-time birth-death(-rotate)
//! chains, plus reversible-jump baselines, exact small-space posteriors and
//! posterior summaries.

pub mod chain;
pub mod config;
pub mod ct;
pub mod data;
pub mod estimate;
pub mod experiment;
pub mod io;
pub mod likelihood;
pub mod moves;
pub mod oracle;
pub mod posterior;
pub mod prior;
pub mod rj;
pub mod simdata;
pub mod tree;

pub use chain::{chain_rng, run_chain, ChainRecord, SamplerError};
pub use config::{Algorithm, ConfigError, RunConfig};
pub use data::{Dataset, EvalSet, FeatureScale};
pub use estimate::{ModelAverage, PosteriorSummary, Weighting};
pub use io::IoError;
pub use moves::{Move, MoveKind};
pub use oracle::{exact_posterior, total_variation, ExactPosterior};
pub use prior::PriorConfig;
pub use simdata::{SimConfig, SimData};
pub use tree::{SplitRule, Tree};
