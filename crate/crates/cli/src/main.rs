use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod io;

#[derive(Parser)]
#[command(name = "cnm", version, about = "Causal network motif analysis of network experiments")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "CNM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an honest exposure tree to an observed experiment.
    Analyze(AnalyzeArgs),
    /// Run synthetic Watts-Strogatz experiments with known outcome models.
    Simulate(SimulateArgs),
    /// Dump per-node motif counts and interference vectors as CSV.
    Motifs(MotifsArgs),
    /// Cross-validate tree hyperparameters on an observed experiment.
    Tune(TuneArgs),
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum CatalogArg {
    Full,
    Dyad,
    DyadTriad,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum PolicyArg {
    Auto,
    DropFeature,
    DropNodes,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Potential,
    Direct,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum QuantArg {
    Fixed16,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum DgpArg {
    Cutoff,
    CausalSd,
    CorrSd,
    Null,
}

/// Tree hyperparameter overrides; unset values use the defaults.
#[derive(Args, Clone, serde::Serialize)]
struct TreeArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    kappa: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eta: Option<usize>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
}

/// Inputs shared by `analyze` and `tune`.
#[derive(Args, Clone, serde::Serialize)]
struct DataArgs {
    /// Edge list, two node ids per line.
    #[arg(long)]
    graph: PathBuf,
    /// CSV with columns node,z.
    #[arg(long = "assign")]
    assignment: PathBuf,
    /// CSV with columns node,y.
    #[arg(long)]
    outcomes: PathBuf,
    /// bernoulli:p or cluster:FILE,p (FILE has columns node,cluster).
    #[arg(long)]
    design: String,
    #[arg(long, value_enum, default_value = "full")]
    catalog: CatalogArg,
    #[arg(long, value_enum, default_value = "auto")]
    policy: PolicyArg,
    /// Drop threshold of the auto policy.
    #[arg(long, default_value_t = 0.05)]
    auto_threshold: f64,
    /// Monte Carlo replicates.
    #[arg(long = "R", default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Transform outcomes with log10(y + 1).
    #[arg(long)]
    log1p: bool,
    #[arg(long, value_enum, default_value = "fixed16")]
    quantization: QuantArg,
    #[command(flatten)]
    tree: TreeArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "potential")]
    mode: ModeArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replicate tensor cache; read when present, written otherwise.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated γ grid.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    gammas: Vec<f64>,
    /// Comma-separated κ grid.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    kappas: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// JSON output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    dgp: Option<DgpArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    cluster_size: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long = "R")]
    reps: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Seed of the first run; run k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// n = 200,000 as in the original experiment (slow).
    #[arg(long)]
    paper_scale: bool,
    /// Skip the dyad-only baseline tree.
    #[arg(long)]
    no_dyad: bool,
    /// Skip the direct-effect tree.
    #[arg(long)]
    no_direct: bool,
    #[command(flatten)]
    tree: TreeArgs,
    /// Set γ to this fraction of the training total sum of squares (default
    /// 0.04; ignored when --gamma is given).
    #[arg(long, conflicts_with = "gamma")]
    gamma_fraction: Option<f64>,
    /// Exit nonzero unless enough runs recover the planted structure.
    #[arg(long)]
    assert_recovery: bool,
    /// JSON report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MotifsArgs {
    #[arg(long)]
    graph: PathBuf,
    /// CSV with columns node,z.
    #[arg(long = "assign")]
    assignment: PathBuf,
    #[arg(long, value_enum, default_value = "full")]
    catalog: CatalogArg,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Analyze(a) => commands::analyze(&a).map(|_| true),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Motifs(a) => commands::motifs(&a).map(|_| true),
        Command::Tune(a) => commands::tune(&a).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
