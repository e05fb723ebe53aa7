//! Posterior estimates from chain traces.
//!
//! Continuous-time traces are averaged with holding-time weights; discrete
//! traces with equal weights. Predictions average, over the trace, the
//! conditional posterior mean of the terminal value of each test point's
//! cell.

use std::collections::{BTreeMap, HashMap, HashSet};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainRecord;
use crate::config::Algorithm;
use crate::data::{Dataset, EvalSet};
use crate::likelihood::SuffStats;
use crate::prior::{leaf_posterior, PriorConfig};
use crate::tree::{NodeId, Tree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("no records left after burn-in")]
    EmptyChain,
    #[error("record {iteration} has non-positive waiting time {value}")]
    WaitingTime { iteration: u64, value: f64 },
    #[error("trace of length {0} is too short (need at least 10)")]
    ShortTrace(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    RaoBlackwell,
    SampleMean,
}

impl Weighting {
    pub fn for_algorithm(a: Algorithm) -> Self {
        if a.is_continuous_time() {
            Weighting::RaoBlackwell
        } else {
            Weighting::SampleMean
        }
    }
}

/// Records after dropping the first `burnin`.
pub fn post_burnin(chain: &[ChainRecord], burnin: u64) -> &[ChainRecord] {
    &chain[(burnin as usize).min(chain.len())..]
}

/// Per-record weights. Holding times are divided by their maximum, so equal
/// holding times give weights of exactly one.
pub fn weights(chain: &[ChainRecord], weighting: Weighting) -> Result<Vec<f64>, EstimateError> {
    if chain.is_empty() {
        return Err(EstimateError::EmptyChain);
    }
    match weighting {
        Weighting::SampleMean => Ok(vec![1.0; chain.len()]),
        Weighting::RaoBlackwell => {
            if let Some(r) = chain
                .iter()
                .find(|r| !(r.waiting_time > 0.0 && r.waiting_time.is_finite()))
            {
                return Err(EstimateError::WaitingTime {
                    iteration: r.iteration,
                    value: r.waiting_time,
                });
            }
            let max = chain.iter().map(|r| r.waiting_time).fold(0.0, f64::max);
            Ok(chain.iter().map(|r| r.waiting_time / max).collect())
        }
    }
}

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let num: f64 = values.iter().zip(weights).map(|(v, w)| w * v).sum();
    let den: f64 = weights.iter().sum();
    num / den
}

pub fn estimate(
    chain: &[ChainRecord],
    weighting: Weighting,
    g: impl Fn(&ChainRecord) -> f64,
) -> Result<f64, EstimateError> {
    let w = weights(chain, weighting)?;
    let values: Vec<f64> = chain.iter().map(g).collect();
    Ok(weighted_mean(&values, &w))
}

/// Holding-time weighted mean of `g` over the trace.
pub fn rao_blackwell_mean(
    chain: &[ChainRecord],
    g: impl Fn(&ChainRecord) -> f64,
) -> Result<f64, EstimateError> {
    estimate(chain, Weighting::RaoBlackwell, g)
}

pub fn sample_mean(
    chain: &[ChainRecord],
    g: impl Fn(&ChainRecord) -> f64,
) -> Result<f64, EstimateError> {
    estimate(chain, Weighting::SampleMean, g)
}

/// Estimated posterior probability of each visited tree.
pub fn occupancy(
    chain: &[ChainRecord],
    weighting: Weighting,
) -> Result<BTreeMap<String, f64>, EstimateError> {
    let w = weights(chain, weighting)?;
    let total: f64 = w.iter().sum();
    let mut out = BTreeMap::new();
    for (r, wi) in chain.iter().zip(&w) {
        *out.entry(r.tree.canonical()).or_insert(0.0) += wi;
    }
    for v in out.values_mut() {
        *v /= total;
    }
    Ok(out)
}

pub fn count_unique_trees(chain: &[ChainRecord]) -> usize {
    chain
        .iter()
        .map(|r| r.tree.canonical())
        .collect::<HashSet<_>>()
        .len()
}

/// Share of each variable among a tree's splits; uniform for the root-only
/// tree.
pub fn tree_activity(tree: &Tree, d: usize) -> Vec<f64> {
    let counts = tree.split_counts(d);
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![1.0 / d as f64; d];
    }
    counts.iter().map(|c| *c as f64 / total as f64).collect()
}

/// Per-variable activity traces: `out[v][i]` for record `i`.
pub fn activity_traces(chain: &[ChainRecord], d: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(chain.len()); d];
    for r in chain {
        for (v, a) in tree_activity(&r.tree, d).into_iter().enumerate() {
            out[v].push(a);
        }
    }
    out
}

pub fn variable_activity(
    chain: &[ChainRecord],
    d: usize,
    weighting: Weighting,
) -> Result<Vec<f64>, EstimateError> {
    let w = weights(chain, weighting)?;
    Ok(activity_traces(chain, d)
        .iter()
        .map(|t| weighted_mean(t, &w))
        .collect())
}

/// Maximum copies of one record when expanding a weighted trace.
pub const MAX_REPLICAS: usize = 100;

/// Repeat each value `round(w / min w)` times, capped at [`MAX_REPLICAS`].
pub fn expand_weighted(trace: &[f64], weights: &[f64]) -> Vec<f64> {
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for (x, w) in trace.iter().zip(weights) {
        let reps = ((w / min).round() as usize).clamp(1, MAX_REPLICAS);
        out.extend(std::iter::repeat_n(*x, reps));
    }
    out
}

/// Autocorrelations at lags `0..n` via zero-padded FFT (biased estimator).
pub fn autocorrelation(trace: &[f64]) -> Vec<f64> {
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = trace.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        return vec![1.0; n];
    }
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// Effective sample size with Geyer's initial positive sequence. With
/// weights, the trace is first expanded by [`expand_weighted`]. A constant
/// trace has effective size equal to its length.
pub fn effective_sample_size(trace: &[f64], weights: Option<&[f64]>) -> Result<f64, EstimateError> {
    if trace.len() < 10 {
        return Err(EstimateError::ShortTrace(trace.len()));
    }
    let expanded;
    let x = match weights {
        Some(w) => {
            expanded = expand_weighted(trace, w);
            expanded.as_slice()
        }
        None => trace,
    };
    let n = x.len();
    if x.iter().all(|v| *v == x[0]) {
        return Ok(n as f64);
    }
    let rho = autocorrelation(x);
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho[2 * m] + rho[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    let tau = -1.0 + 2.0 * sum;
    Ok(n as f64 / tau)
}

/// Leaves as `(id, count, sum)` and the leaf index of each prediction row.
type CachedTree = (Vec<(NodeId, usize, f64)>, Vec<usize>);

/// Model-averaged predictions over a trace.
pub struct ModelAverage<'a> {
    data: &'a Dataset,
    prior: &'a PriorConfig,
    // Per distinct tree: cell statistics and the leaf of every row of the
    // last prediction set.
    cache: HashMap<String, CachedTree>,
}

impl<'a> ModelAverage<'a> {
    pub fn new(data: &'a Dataset, prior: &'a PriorConfig) -> Self {
        ModelAverage {
            data,
            prior,
            cache: HashMap::new(),
        }
    }

    fn entry(&mut self, tree: &Tree, rows: &[Vec<f64>]) -> &CachedTree {
        let data = self.data;
        self.cache.entry(tree.canonical()).or_insert_with(|| {
            let stats = SuffStats::compute(tree, data);
            let leaves: Vec<(NodeId, usize, f64)> =
                stats.iter().map(|(l, c)| (l, c.count, c.sum)).collect();
            let index: HashMap<NodeId, usize> =
                leaves.iter().enumerate().map(|(i, l)| (l.0, i)).collect();
            let leaf_of = rows
                .iter()
                .map(|x| index[&tree.route(|rule| data.point_goes_left(rule, x))])
                .collect();
            (leaves, leaf_of)
        })
    }

    /// Predictions at `rows` (normalized features) for each weighting.
    pub fn predict(
        &mut self,
        chain: &[ChainRecord],
        rows: &[Vec<f64>],
        weightings: &[Weighting],
    ) -> Result<Vec<Vec<f64>>, EstimateError> {
        self.cache.clear();
        let ws: Vec<Vec<f64>> = weightings
            .iter()
            .map(|w| weights(chain, *w))
            .collect::<Result<_, _>>()?;
        let mut sums = vec![vec![0.0; rows.len()]; weightings.len()];
        let prior = *self.prior;
        for (i, r) in chain.iter().enumerate() {
            let (leaves, leaf_of) = self.entry(&r.tree, rows);
            let means: Vec<f64> = leaves
                .iter()
                .map(|(_, count, sum)| {
                    let cell = crate::likelihood::CellStats {
                        count: *count,
                        sum: *sum,
                        sum_sq: 0.0,
                    };
                    leaf_posterior(&cell, r.sigma2, &prior).0
                })
                .collect();
            for (k, w) in ws.iter().enumerate() {
                let wi = w[i];
                for (s, leaf) in sums[k].iter_mut().zip(leaf_of) {
                    *s += wi * means[*leaf];
                }
            }
        }
        Ok(sums
            .into_iter()
            .zip(&ws)
            .map(|(s, w)| {
                let total: f64 = w.iter().sum();
                s.into_iter().map(|v| v / total).collect()
            })
            .collect())
    }
}

pub fn predict(
    chain: &[ChainRecord],
    data: &Dataset,
    prior: &PriorConfig,
    rows: &[Vec<f64>],
    weighting: Weighting,
) -> Result<Vec<f64>, EstimateError> {
    let mut avg = ModelAverage::new(data, prior);
    Ok(avg.predict(chain, rows, &[weighting])?.remove(0))
}

pub fn mean_squared_error(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64
}

/// One run's measures. `replication` is `None` for averaged rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub algorithm: Algorithm,
    pub replication: Option<usize>,
    pub variables: Vec<String>,
    /// Test-set error against observed responses, with the algorithm's own
    /// weighting.
    pub mse: f64,
    /// Same with equal weights.
    pub mse_unweighted: f64,
    /// Errors against the noiseless regression function, when known.
    pub mse_noiseless: Option<f64>,
    pub mse_noiseless_unweighted: Option<f64>,
    /// Effective sample sizes of the `sigma2` trace and of each variable's
    /// activity trace.
    pub ess: BTreeMap<String, f64>,
    pub activity: Vec<f64>,
    pub unique_trees: f64,
    pub ess_per_second: BTreeMap<String, f64>,
    pub wall_time_seconds: f64,
}

impl PosteriorSummary {
    /// Monitored scalar names in report order.
    pub fn monitored(&self) -> Vec<String> {
        std::iter::once("sigma2".to_string())
            .chain(self.variables.iter().cloned())
            .collect()
    }
}

/// Summarize a post-burn-in trace against a test set.
pub fn summarize(
    chain: &[ChainRecord],
    algorithm: Algorithm,
    replication: usize,
    data: &Dataset,
    prior: &PriorConfig,
    test: &EvalSet,
    wall_time_seconds: f64,
) -> Result<PosteriorSummary, EstimateError> {
    let weighting = Weighting::for_algorithm(algorithm);
    let w = weights(chain, weighting)?;
    let mut avg = ModelAverage::new(data, prior);
    let preds = avg.predict(chain, &test.rows, &[weighting, Weighting::SampleMean])?;
    let d = data.d();
    let variables = data.names().to_vec();
    let ess_weights = (weighting == Weighting::RaoBlackwell).then_some(w.as_slice());
    let mut ess = BTreeMap::new();
    let sigma: Vec<f64> = chain.iter().map(|r| r.sigma2).collect();
    ess.insert(
        "sigma2".to_string(),
        effective_sample_size(&sigma, ess_weights)?,
    );
    for (name, trace) in variables.iter().zip(activity_traces(chain, d)) {
        ess.insert(name.clone(), effective_sample_size(&trace, ess_weights)?);
    }
    // Left empty when no time was measured.
    let ess_per_second = ess
        .iter()
        .filter(|_| wall_time_seconds > 0.0)
        .map(|(k, v)| (k.clone(), v / wall_time_seconds))
        .collect();
    let truth = test.truth.as_deref();
    Ok(PosteriorSummary {
        algorithm,
        replication: Some(replication),
        mse: mean_squared_error(&preds[0], &test.response),
        mse_unweighted: mean_squared_error(&preds[1], &test.response),
        mse_noiseless: truth.map(|t| mean_squared_error(&preds[0], t)),
        mse_noiseless_unweighted: truth.map(|t| mean_squared_error(&preds[1], t)),
        ess,
        activity: variable_activity(chain, d, weighting)?,
        unique_trees: count_unique_trees(chain) as f64,
        ess_per_second,
        wall_time_seconds,
        variables,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Average the summaries of each algorithm, in order of first appearance.
pub fn aggregate(summaries: &[PosteriorSummary]) -> Vec<PosteriorSummary> {
    let mut order: Vec<Algorithm> = Vec::new();
    for s in summaries {
        if !order.contains(&s.algorithm) {
            order.push(s.algorithm);
        }
    }
    order
        .into_iter()
        .map(|alg| {
            let group: Vec<&PosteriorSummary> =
                summaries.iter().filter(|s| s.algorithm == alg).collect();
            let first = group[0];
            let avg_map =
                |f: &dyn Fn(&PosteriorSummary) -> &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
                    f(first)
                        .keys()
                        .map(|k| {
                            (
                                k.clone(),
                                mean(
                                    group
                                        .iter()
                                        .map(|s| f(s).get(k).copied().unwrap_or(f64::NAN)),
                                ),
                            )
                        })
                        .collect()
                };
            let opt_mean = |f: &dyn Fn(&PosteriorSummary) -> Option<f64>| -> Option<f64> {
                group
                    .iter()
                    .map(|s| f(s))
                    .collect::<Option<Vec<f64>>>()
                    .map(|v| mean(v.into_iter()))
            };
            PosteriorSummary {
                algorithm: alg,
                replication: None,
                variables: first.variables.clone(),
                mse: mean(group.iter().map(|s| s.mse)),
                mse_unweighted: mean(group.iter().map(|s| s.mse_unweighted)),
                mse_noiseless: opt_mean(&|s| s.mse_noiseless),
                mse_noiseless_unweighted: opt_mean(&|s| s.mse_noiseless_unweighted),
                ess: avg_map(&|s| &s.ess),
                activity: (0..first.activity.len())
                    .map(|v| mean(group.iter().map(|s| s.activity[v])))
                    .collect(),
                unique_trees: mean(group.iter().map(|s| s.unique_trees)),
                ess_per_second: avg_map(&|s| &s.ess_per_second),
                wall_time_seconds: mean(group.iter().map(|s| s.wall_time_seconds)),
            }
        })
        .collect()
}
