//! `ctbart`: simulate benchmark data, run samplers, check small tree spaces
//! against their exact posterior and summarize runs.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctbart::config::MoveWeights;
use ctbart::io::SummaryFormat;

#[derive(Debug, Parser)]
#[command(
    name = "ctbart",
    version,
    about = "Continuous-time and reversible-jump samplers for Bayesian regression trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write simulated train.csv and test.csv.
    Simulate(SimulateArgs),
    /// Run sampler variants over replications and write chains and summaries.
    Run(RunArgs),
    /// Compare chain occupancies with the exact posterior of a small tree space.
    Oracle(OracleArgs),
    /// Merge summary files or summarize saved chains.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Noise variance.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Rows per file; a multiple of 3.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RJ-A, RJ-B, RJ-C, CT-A, CT-B, CT-C or `all`.
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise variance of simulated data (ignored with --train).
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Rows of simulated data (ignored with --train).
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Hold the noise variance fixed at this value instead of sampling it.
    #[arg(long)]
    pub fixed_sigma2: Option<f64>,
    #[arg(long)]
    pub alpha_mix: Option<f64>,
    /// Reversible-jump move weights as birth,death,rotate.
    #[arg(long, value_parser = parse_weights)]
    pub rj_weights: Option<MoveWeights>,
    #[arg(long)]
    pub min_node_size: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Training CSV; simulated data is used when omitted.
    #[arg(long, requires = "test")]
    pub train: Option<PathBuf>,
    /// Test CSV matching --train.
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    /// Grid size per variable for --train data.
    #[arg(long, default_value_t = 100)]
    pub n_cut: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: SummaryFormat,
    /// Skip writing chain traces.
    #[arg(long)]
    pub no_chains: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Largest tree depth enumerated.
    #[arg(long, default_value_t = 2)]
    pub max_depth: usize,
    /// Jumps (CT-A) and steps (RJ-A) per chain.
    #[arg(long, default_value_t = 50_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fixed noise variance.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 5)]
    pub min_node_size: usize,
    /// Dataset CSV; the built-in twenty-point problem when omitted.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Grid size per variable for --train data.
    #[arg(long, default_value_t = 2)]
    pub n_cut: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: SummaryFormat,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Summary JSON files written by `run --format json`.
    #[arg(long = "summary")]
    pub summaries: Vec<PathBuf>,
    /// Chain traces to summarize; needs --algorithm, --train and --test.
    #[arg(long = "chain")]
    pub chains: Vec<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub burnin: u64,
    #[arg(long, requires = "test")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub n_cut: usize,
    #[arg(long, default_value_t = 5)]
    pub min_node_size: usize,
    /// Output file; the table is printed either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: SummaryFormat,
}

fn parse_weights(s: &str) -> Result<MoveWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [birth, death, rotate] = parts[..] else {
        return Err("expected three weights: birth,death,rotate".into());
    };
    let w = MoveWeights {
        birth,
        death,
        rotate,
    };
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Run(a) => commands::run(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Summarize(a) => commands::summarize(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
