//! Replicated benchmark runs: simulate data, run a sampler, summarize.
//!
//! Replication `r` trains on data simulated with seed `sim.seed + r` and
//! runs its chain on stream `r` of the run seed. Wall time covers the chain
//! only.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{chain_rng, run_chain, ChainRecord, SamplerError};
use crate::config::{Algorithm, RunConfig};
use crate::data::{Dataset, EvalSet};
use crate::estimate::{
    occupancy, post_burnin, summarize, EstimateError, PosteriorSummary, Weighting,
};
use crate::io::IoError;
use crate::oracle::{exact_posterior, total_variation, OracleError};
use crate::prior::PriorConfig;
use crate::simdata::{generate, generate_test, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Chain and summary of one replication.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub chain: Vec<ChainRecord>,
    pub summary: PosteriorSummary,
}

/// The run's prior, or one calibrated on the training response.
pub fn resolve_prior(run: &RunConfig, data: &Dataset) -> PriorConfig {
    run.prior
        .unwrap_or_else(|| PriorConfig::calibrated(data.response()))
}

/// Run replication `rep` of `run` on fixed data.
pub fn run_replication(
    data: &Dataset,
    test: &EvalSet,
    run: &RunConfig,
    rep: usize,
) -> Result<RunOutput, ExperimentError> {
    let prior = resolve_prior(run, data);
    let mut rng = chain_rng(run.seed, rep as u64);
    let start = Instant::now();
    let chain = run_chain(data, &prior, run, &mut rng)?;
    let wall = start.elapsed().as_secs_f64();
    let summary = summarize(
        post_burnin(&chain, run.burnin),
        run.algorithm,
        rep,
        data,
        &prior,
        test,
        wall,
    )?;
    Ok(RunOutput { chain, summary })
}

/// Training and test data of replication `rep`.
pub fn replication_data(sim: &SimConfig, rep: usize) -> Result<(Dataset, EvalSet), SimError> {
    let cfg = SimConfig {
        seed: sim.seed.wrapping_add(rep as u64),
        ..*sim
    };
    let train = generate(&cfg)?;
    let test = generate_test(&cfg)?.eval_set();
    Ok((train.data, test))
}

fn fan_out<F>(
    runs: &[RunConfig],
    data_for: impl Fn(usize) -> Result<(Dataset, EvalSet), ExperimentError> + Sync,
    sink: F,
) -> Result<Vec<PosteriorSummary>, ExperimentError>
where
    F: Fn(&RunConfig, &RunOutput) -> Result<(), ExperimentError> + Sync,
{
    let jobs: Vec<(usize, usize)> = runs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| (0..r.replications).map(move |rep| (i, rep)))
        .collect();
    let work = |&(i, rep): &(usize, usize)| -> Result<PosteriorSummary, ExperimentError> {
        let (data, test) = data_for(rep)?;
        let out = run_replication(&data, &test, &runs[i], rep)?;
        sink(&runs[i], &out)?;
        Ok(out.summary)
    };
    if rayon::current_num_threads() > 1 {
        jobs.par_iter().map(work).collect()
    } else {
        jobs.iter().map(work).collect()
    }
}

/// Run every configuration over `run.replications` simulated replications,
/// in parallel on the current rayon pool. `sink` sees each run as it
/// finishes; summaries come back ordered by configuration, then replication.
pub fn run_simulated<F>(
    sim: &SimConfig,
    runs: &[RunConfig],
    sink: F,
) -> Result<Vec<PosteriorSummary>, ExperimentError>
where
    F: Fn(&RunConfig, &RunOutput) -> Result<(), ExperimentError> + Sync,
{
    fan_out(runs, |rep| Ok(replication_data(sim, rep)?), sink)
}

/// Same as [`run_simulated`] with every replication on the given data.
pub fn run_on_data<F>(
    data: &Dataset,
    test: &EvalSet,
    runs: &[RunConfig],
    sink: F,
) -> Result<Vec<PosteriorSummary>, ExperimentError>
where
    F: Fn(&RunConfig, &RunOutput) -> Result<(), ExperimentError> + Sync,
{
    fan_out(runs, |_| Ok((data.clone(), test.clone())), sink)
}

/// Exact and estimated probability of one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub tree: String,
    pub exact: f64,
    pub ct_estimate: f64,
    pub rj_estimate: f64,
}

/// Exact posterior of a small tree space next to CT-A (holding-time
/// weighted) and RJ-A (plain) occupancies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub max_depth: usize,
    pub sigma2: f64,
    pub jumps: u64,
    pub rows: Vec<OracleRow>,
    pub tv_ct: f64,
    pub tv_rj: f64,
}

/// Chains target the prior truncated at `max_depth`, the space the
/// enumeration covers. A chain with no move out of its start state stays
/// there.
pub fn oracle_comparison(
    data: &Dataset,
    prior: &PriorConfig,
    sigma2: f64,
    max_depth: usize,
    jumps: u64,
    seed: u64,
) -> Result<OracleReport, ExperimentError> {
    let prior = PriorConfig {
        max_depth: Some(max_depth),
        ..*prior
    };
    let exact = exact_posterior(data, &prior, sigma2, max_depth)?;
    let exact_map = exact.as_map();
    let mut estimates = Vec::new();
    for alg in [Algorithm::CtA, Algorithm::RjA] {
        let mut run = RunConfig::new(alg, jumps);
        run.fixed_sigma2 = Some(sigma2);
        run.min_node_size = data.min_node_size();
        run.seed = seed;
        let occ = match run_chain(data, &prior, &run, &mut chain_rng(seed, 0)) {
            Ok(chain) => occupancy(&chain, Weighting::for_algorithm(alg))?,
            Err(SamplerError::Stuck(tree)) => [(tree, 1.0)].into(),
            Err(e) => return Err(e.into()),
        };
        estimates.push(occ);
    }
    let rows = exact
        .trees
        .iter()
        .zip(&exact.probabilities)
        .map(|(t, p)| {
            let key = t.canonical();
            OracleRow {
                ct_estimate: estimates[0].get(&key).copied().unwrap_or(0.0),
                rj_estimate: estimates[1].get(&key).copied().unwrap_or(0.0),
                exact: *p,
                tree: key,
            }
        })
        .collect();
    Ok(OracleReport {
        max_depth,
        sigma2,
        jumps,
        rows,
        tv_ct: total_variation(&estimates[0], &exact_map),
        tv_rj: total_variation(&estimates[1], &exact_map),
    })
}
