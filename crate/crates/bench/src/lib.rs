//! Benchmarks of the per-step costs that dominate a run: candidate
//! enumeration, single sampler steps, marginal likelihoods and ESS.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use ctbart::chain::{chain_rng, run_chain, Sampler};
use ctbart::config::{Algorithm, RunConfig};
use ctbart::ct::{enumerate_candidates, MoveSet};
use ctbart::data::Dataset;
use ctbart::estimate::{activity_traces, effective_sample_size};
use ctbart::likelihood::log_marginal_likelihood;
use ctbart::posterior::TreeFit;
use ctbart::prior::PriorConfig;
use ctbart::simdata::{generate, SimConfig};
use ctbart::tree::Tree;

fn data() -> Dataset {
    generate(&SimConfig {
        seed: 1,
        ..SimConfig::default()
    })
    .unwrap()
    .data
}

fn three_leaves() -> Tree {
    "I(v=0,c=49,I(v=1,c=49,T,T),T)".parse().unwrap()
}

pub fn candidates(c: &mut Criterion) {
    let data = data();
    let prior = PriorConfig::calibrated(data.response());
    let mut group = c.benchmark_group("enumerate_candidates");
    for (name, tree) in [
        ("root", Tree::root_only()),
        ("three_leaves", three_leaves()),
    ] {
        let fit = TreeFit::new(tree, &data, &prior, 1.0);
        group.bench_with_input(
            BenchmarkId::new("birth_death_rotate", name),
            &fit,
            |b, fit| {
                b.iter(|| black_box(enumerate_candidates(fit, MoveSet::BirthDeathRotate, false)))
            },
        );
    }
    group.finish();
}

pub fn steps(c: &mut Criterion) {
    let data = data();
    let prior = PriorConfig::calibrated(data.response());
    let mut group = c.benchmark_group("sampler_step");
    for alg in Algorithm::ALL {
        let run = RunConfig::new(alg, 1);
        let mut rng = chain_rng(2, 0);
        let mut sampler = Sampler::new(&data, &prior, &run, &mut rng);
        for _ in 0..200 {
            sampler.step(&mut rng).unwrap();
        }
        group.bench_function(alg.name(), |b| {
            b.iter(|| black_box(sampler.step(&mut rng).unwrap()))
        });
    }
    group.finish();
}

pub fn likelihood(c: &mut Criterion) {
    let data = data();
    let prior = PriorConfig::calibrated(data.response());
    let tree = three_leaves();
    c.bench_function("log_marginal_likelihood", |b| {
        b.iter(|| black_box(log_marginal_likelihood(&tree, &data, 1.0, &prior)))
    });
}

pub fn ess(c: &mut Criterion) {
    let data = data();
    let prior = PriorConfig::calibrated(data.response());
    let chain = run_chain(
        &data,
        &prior,
        &RunConfig::new(Algorithm::RjC, 20_000),
        &mut chain_rng(3, 0),
    )
    .unwrap();
    let trace = activity_traces(&chain, data.d()).remove(1);
    c.bench_function("effective_sample_size_20k", |b| {
        b.iter(|| black_box(effective_sample_size(&trace, None).unwrap()))
    });
}

pub fn benchmarks(c: &mut Criterion) {
    candidates(c);
    steps(c);
    likelihood(c);
    ess(c);
}
