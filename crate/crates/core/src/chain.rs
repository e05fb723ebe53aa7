//! Chain state, trace records and the outer sampling loop.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::ct::{self, CtConfig};
use crate::data::{DataError, Dataset};
use crate::likelihood::SuffStats;
use crate::moves::MoveKind;
use crate::prior::{draw_leaf_values, PriorConfig};
use crate::rj::{self, RjConfig, RjCounters};
use crate::tree::{Tree, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("every move out of tree {0} has rate zero")]
    Stuck(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One line of a chain trace.
///
/// Continuous-time samplers record the state a jump leaves from, with its
/// holding time; discrete-time samplers record the state after each step
/// with a unit weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub iteration: u64,
    pub tree: Tree,
    pub sigma2: f64,
    pub waiting_time: f64,
    #[serde(rename = "move")]
    pub move_kind: MoveKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub tree: Tree,
    pub sigma2: f64,
}

/// Shared, read-only inputs of a sampler.
#[derive(Debug, Clone, Copy)]
pub struct ChainContext<'a> {
    pub data: &'a Dataset,
    pub prior: &'a PriorConfig,
    pub update_sigma2: bool,
}

/// Random stream of one replication: the base seed picks the key, the
/// replication index picks the stream.
pub fn chain_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

enum Kernel {
    Ct(CtConfig),
    Rj(RjConfig),
}

/// A configured sampler holding its own state.
pub struct Sampler<'a> {
    ctx: ChainContext<'a>,
    kernel: Kernel,
    state: ChainState,
    iteration: u64,
    pub rj_counters: RjCounters,
}

impl<'a> Sampler<'a> {
    /// Starts from the root-only tree. The noise variance starts at the
    /// fixed value if given, otherwise at the sample variance of the response
    /// (the prior scale if that is zero).
    pub fn new<R: Rng + ?Sized>(
        data: &'a Dataset,
        prior: &'a PriorConfig,
        run: &RunConfig,
        rng: &mut R,
    ) -> Self {
        let sigma2 = run.fixed_sigma2.unwrap_or_else(|| {
            let v = data.response_variance();
            if v > 0.0 {
                v
            } else {
                prior.lambda
            }
        });
        let ctx = ChainContext {
            data,
            prior,
            update_sigma2: run.fixed_sigma2.is_none(),
        };
        let kernel = if run.algorithm.is_continuous_time() {
            Kernel::Ct(CtConfig::from_run(run))
        } else {
            Kernel::Rj(RjConfig::from_run(run))
        };
        let mut tree = Tree::root_only();
        if matches!(&kernel, Kernel::Ct(c) if c.full_conditional) {
            let stats = SuffStats::compute(&tree, data);
            tree = draw_leaf_values(&tree, &stats, sigma2, prior, rng);
        }
        Sampler {
            ctx,
            kernel,
            state: ChainState { tree, sigma2 },
            iteration: 0,
            rj_counters: RjCounters::default(),
        }
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<ChainRecord, SamplerError> {
        let it = self.iteration;
        let record = match &self.kernel {
            Kernel::Ct(cfg) => ct::ct_step(&mut self.state, &self.ctx, cfg, it, rng)?,
            Kernel::Rj(cfg) => rj::rj_step(
                &mut self.state,
                &self.ctx,
                cfg,
                it,
                &mut self.rj_counters,
                rng,
            )?,
        };
        self.iteration += 1;
        Ok(record)
    }
}

/// Run one chain of `run.iterations` records (burn-in included). The data's
/// minimum node size is overridden by the run's.
pub fn run_chain<R: Rng + ?Sized>(
    data: &Dataset,
    prior: &PriorConfig,
    run: &RunConfig,
    rng: &mut R,
) -> Result<Vec<ChainRecord>, SamplerError> {
    run.validate()?;
    let data = if data.min_node_size() == run.min_node_size {
        Cow::Borrowed(data)
    } else {
        Cow::Owned(data.clone().with_min_node_size(run.min_node_size)?)
    };
    let mut sampler = Sampler::new(&data, prior, run, rng);
    let mut out = Vec::with_capacity(run.iterations as usize);
    for _ in 0..run.iterations {
        out.push(sampler.step(rng)?);
    }
    Ok(out)
}
