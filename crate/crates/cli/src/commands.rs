use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctbart::config::{Algorithm, RunConfig};
use ctbart::estimate::{post_burnin, summarize as summarize_chain, PosteriorSummary};
use ctbart::experiment::{oracle_comparison, run_on_data, run_simulated, RunOutput};
use ctbart::io::{
    load_dataset, load_eval_set, load_run_config, read_chain, read_summary_json, write_chain,
    write_dataset, write_oracle_report, write_summary, DatasetSchema, SummaryFormat,
};
use ctbart::prior::PriorConfig;
use ctbart::simdata::{generate, generate_test, step_toy, SimConfig};

use crate::table::{print_oracle, print_summary};
use crate::{OracleArgs, RunArgs, SimulateArgs, SummarizeArgs};

fn extension(format: SummaryFormat) -> &'static str {
    match format {
        SummaryFormat::Csv => "csv",
        SummaryFormat::Json => "json",
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = SimConfig {
        n: a.n,
        sigma2: a.sigma2,
        seed: a.seed,
        ..SimConfig::default()
    };
    let train = generate(&cfg)?;
    let test = generate_test(&cfg)?;
    create_dir(&a.out_dir)?;
    for (name, sim) in [("train.csv", &train), ("test.csv", &test)] {
        let path = a.out_dir.join(name);
        write_dataset(&path, &sim.data, Some(&sim.truth))?;
        println!("wrote {} ({} rows)", path.display(), sim.data.n());
    }
    Ok(())
}

fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Algorithm::ALL.to_vec());
    }
    Ok(vec![s.parse()?])
}

/// Configuration file values, overridden by flags. Without a file the
/// defaults are 20,000 iterations with 1,000 burn-in.
fn run_configs(a: &RunArgs) -> Result<Vec<RunConfig>> {
    let base = match &a.config {
        Some(path) => {
            load_run_config(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let mut run = RunConfig::new(Algorithm::CtA, 20_000);
            run.burnin = 1_000;
            run
        }
    };
    let algorithms = match (&a.algorithm, &a.config) {
        (Some(s), _) => parse_algorithms(s)?,
        (None, Some(_)) => vec![base.algorithm],
        (None, None) => bail!("--algorithm is required without --config"),
    };
    let mut base = base;
    if let Some(v) = a.iters {
        base.iterations = v;
    }
    if let Some(v) = a.burnin {
        base.burnin = v;
    }
    if let Some(v) = a.seed {
        base.seed = v;
    }
    if let Some(v) = a.alpha_mix {
        base.alpha_mix = v;
    }
    if let Some(v) = a.rj_weights {
        base.rj_move_weights = v;
    }
    if let Some(v) = a.min_node_size {
        base.min_node_size = v;
    }
    if let Some(v) = a.replications {
        base.replications = v;
    }
    if let Some(v) = a.threads {
        base.threads = Some(v);
    }
    if a.fixed_sigma2.is_some() {
        base.fixed_sigma2 = a.fixed_sigma2;
    }
    let runs: Vec<RunConfig> = algorithms
        .into_iter()
        .map(|algorithm| RunConfig {
            algorithm,
            ..base.clone()
        })
        .collect();
    for r in &runs {
        r.validate()?;
    }
    Ok(runs)
}

fn chain_path(dir: &Path, run: &RunConfig, rep: usize) -> PathBuf {
    dir.join(format!("{}_rep{rep}.jsonl", run.algorithm.name()))
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()?)
}

pub fn run(a: &RunArgs) -> Result<()> {
    let runs = run_configs(a)?;
    create_dir(&a.out_dir)?;
    let chain_dir = a.out_dir.join("chains");
    if !a.no_chains {
        create_dir(&chain_dir)?;
    }
    let sink =
        |run: &RunConfig, out: &RunOutput| -> Result<(), ctbart::experiment::ExperimentError> {
            if !a.no_chains {
                let rep = out.summary.replication.unwrap_or(0);
                write_chain(&chain_path(&chain_dir, run, rep), &out.chain)?;
            }
            Ok(())
        };
    let pool = thread_pool(runs[0].threads)?;
    let summaries = pool.install(|| -> Result<Vec<PosteriorSummary>> {
        match (&a.train, &a.test) {
            (Some(train), Some(test)) => {
                let schema = DatasetSchema {
                    n_cut: a.n_cut,
                    min_node_size: runs[0].min_node_size,
                    ..DatasetSchema::default()
                };
                let loaded = load_dataset(train, &schema)
                    .with_context(|| format!("reading {}", train.display()))?;
                let eval = load_eval_set(test, &schema, &loaded.data)
                    .with_context(|| format!("reading {}", test.display()))?;
                Ok(run_on_data(&loaded.data, &eval, &runs, sink)?)
            }
            _ => {
                let sim = SimConfig {
                    n: a.n,
                    sigma2: a.sigma2,
                    seed: runs[0].seed,
                    ..SimConfig::default()
                };
                Ok(run_simulated(&sim, &runs, sink)?)
            }
        }
    })?;
    let path = a.out_dir.join(format!("summary.{}", extension(a.format)));
    write_summary(&path, &summaries, a.format)?;
    print_summary(&summaries);
    println!("wrote {}", path.display());
    Ok(())
}

pub fn oracle(a: &OracleArgs) -> Result<()> {
    let data = match &a.train {
        Some(path) => {
            let schema = DatasetSchema {
                n_cut: a.n_cut,
                min_node_size: a.min_node_size,
                ..DatasetSchema::default()
            };
            load_dataset(path, &schema)
                .with_context(|| format!("reading {}", path.display()))?
                .data
        }
        None => step_toy(20, 99, a.min_node_size)?,
    };
    let report = oracle_comparison(
        &data,
        &PriorConfig::default(),
        a.sigma2,
        a.max_depth,
        a.iters,
        a.seed,
    )?;
    print_oracle(&report);
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        let path = dir.join(format!("oracle.{}", extension(a.format)));
        write_oracle_report(&path, &report, a.format)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn summarize(a: &SummarizeArgs) -> Result<()> {
    let mut runs = Vec::new();
    for path in &a.summaries {
        let report =
            read_summary_json(path).with_context(|| format!("reading {}", path.display()))?;
        runs.extend(report.runs);
    }
    if !a.chains.is_empty() {
        let (Some(alg), Some(train), Some(test)) = (&a.algorithm, &a.train, &a.test) else {
            bail!("summarizing chains needs --algorithm, --train and --test");
        };
        let algorithm: Algorithm = alg.parse()?;
        let schema = DatasetSchema {
            n_cut: a.n_cut,
            min_node_size: a.min_node_size,
            ..DatasetSchema::default()
        };
        let loaded =
            load_dataset(train, &schema).with_context(|| format!("reading {}", train.display()))?;
        let eval = load_eval_set(test, &schema, &loaded.data)
            .with_context(|| format!("reading {}", test.display()))?;
        let prior = PriorConfig::calibrated(loaded.data.response());
        for (rep, path) in a.chains.iter().enumerate() {
            let chain = read_chain(path).with_context(|| format!("reading {}", path.display()))?;
            let s = summarize_chain(
                post_burnin(&chain, a.burnin),
                algorithm,
                rep,
                &loaded.data,
                &prior,
                &eval,
                0.0,
            )
            .with_context(|| format!("summarizing {}", path.display()))?;
            runs.push(s);
        }
    }
    if runs.is_empty() {
        bail!("nothing to summarize: pass --summary or --chain files");
    }
    print_summary(&runs);
    if let Some(out) = &a.out {
        write_summary(out, &runs, a.format)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
