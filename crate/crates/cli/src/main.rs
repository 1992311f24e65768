//! `sddmfac`: build, inspect and sample from sparse factor chains.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sddmfac::gen::InstanceKind;
use sddmfac::sparsify::{SparsifyMode, SparsifyParams};

use report::RunReport;

#[derive(Debug, Parser)]
#[command(name = "sddmfac", version, about = "Sparse factor chains for powers of SDDM matrices")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "SDDMFAC_THREADS")]
    threads: Option<usize>,
    /// Write the JSON run report here instead of stdout.
    #[arg(long, global = true, env = "SDDMFAC_REPORT")]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a test matrix in Matrix Market format.
    Gen(GenArgs),
    /// Build a factor of M^p and write it to a container file.
    Factor(FactorArgs),
    /// Draw samples from N(M⁻¹h, M⁻¹) with a p = -1 factor.
    Sample(SampleArgs),
    /// Check C̃C̃ᵀ ≈ M^p densely.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum KindArg {
    Path,
    Grid2d,
    #[value(name = "random_regular", alias = "random-regular")]
    RandomRegular,
    #[value(name = "sdd_mixed", alias = "sdd-mixed")]
    SddMixed,
}

impl From<KindArg> for InstanceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Path => InstanceKind::Path,
            KindArg::Grid2d => InstanceKind::Grid2d,
            KindArg::RandomRegular => InstanceKind::RandomRegular,
            KindArg::SddMixed => InstanceKind::SddMixed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(value_enum)]
    kind: KindArg,
    /// Vertices for path, random_regular and sdd_mixed; side length for grid2d.
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 1.0)]
    slack: f64,
    /// Degree of random_regular graphs.
    #[arg(long, default_value_t = 4)]
    degree: usize,
    #[arg(long, default_value_t = 0, env = "SDDMFAC_SEED")]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SparsifyArgs {
    /// Replace sampling by the exact square X̃ = ½X + ½X².
    #[arg(long)]
    exact: bool,
    /// Walks per incident entry.
    #[arg(long)]
    samples_per_edge: Option<usize>,
    #[arg(long, default_value_t = SparsifyParams::default().oversampling)]
    oversampling: f64,
    /// Largest n with dense leverage scores.
    #[arg(long, default_value_t = SparsifyParams::default().exact_threshold)]
    exact_threshold: usize,
    #[arg(long, default_value_t = SparsifyParams::default().walk_share)]
    walk_share: f64,
    #[arg(long, default_value_t = SparsifyParams::default().jl_factor)]
    jl_factor: f64,
    #[arg(long, default_value_t = SparsifyParams::default().cg_tol)]
    cg_tol: f64,
    /// Largest n whose per-level eps is measured densely.
    #[arg(long, default_value_t = SparsifyParams::default().measure_max_n)]
    measure_max_n: usize,
}

impl SparsifyArgs {
    fn params(&self, seed: u64) -> SparsifyParams {
        SparsifyParams {
            seed,
            samples_per_edge: self.samples_per_edge,
            mode: if self.exact {
                SparsifyMode::Exact
            } else {
                SparsifyMode::Sampled
            },
            exact_threshold: self.exact_threshold,
            walk_share: self.walk_share,
            oversampling: self.oversampling,
            jl_factor: self.jl_factor,
            cg_tol: self.cg_tol,
            measure_max_n: self.measure_max_n,
            ..SparsifyParams::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct FactorArgs {
    /// Input matrix (Matrix Market, symmetric).
    matrix: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    p: f64,
    #[arg(long, default_value_t = 0.1, env = "SDDMFAC_EPS")]
    eps: f64,
    #[arg(long, default_value_t = 0, env = "SDDMFAC_SEED")]
    seed: u64,
    /// Accept SDD input with positive off-diagonals by factoring its lift.
    #[arg(long)]
    gremban: bool,
    /// Store the edge-based factor Z B (p = -1 only).
    #[arg(long)]
    edge_based: bool,
    /// Skip refinement of p = -1 factors.
    #[arg(long)]
    no_refine: bool,
    /// Σ ε_i of the crude chain under a refined factor.
    #[arg(long, default_value_t = 1.0)]
    crude_eps: f64,
    #[arg(long, default_value_t = 1e-6)]
    refine_eps_cap: f64,
    /// Fixed refinement radius in (0, 1).
    #[arg(long)]
    refine_delta: Option<f64>,
    /// Share of eps given to the chain for p ≠ -1.
    #[arg(long, default_value_t = 0.5)]
    chain_share: f64,
    #[command(flatten)]
    sparsify: SparsifyArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Args, Serialize)]
struct SampleArgs {
    /// Factor container written by `factor`.
    factor: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0, env = "SDDMFAC_SEED")]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Potential vector h; omitted means zero mean.
    #[arg(long)]
    h: Option<PathBuf>,
    /// Accuracy recorded in the sidecar; defaults to the factor's guarantee.
    #[arg(long)]
    eps: Option<f64>,
    /// Draw through Z B instead of the square factor.
    #[arg(long)]
    edge_based: bool,
    /// Test the batch against the dense covariance and mean.
    #[arg(long)]
    check: bool,
    #[arg(long, default_value_t = 3.0)]
    z: f64,
    /// Fraction of covariance entries that must pass.
    #[arg(long, default_value_t = 0.99)]
    min_pass: f64,
}

#[derive(Debug, Args, Serialize)]
struct CheckArgs {
    matrix: PathBuf,
    factor: PathBuf,
    /// Defaults to the factor's stated guarantee.
    #[arg(long)]
    eps: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match cli.threads {
        Some(t) if t > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                eprintln!("warning: {e}");
            }
            t
        }
        _ => rayon::current_num_threads(),
    };

    let (name, config, seed) = match &cli.command {
        Command::Gen(a) => ("gen", serde_json::to_value(a), Some(a.seed)),
        Command::Factor(a) => ("factor", serde_json::to_value(a), Some(a.seed)),
        Command::Sample(a) => ("sample", serde_json::to_value(a), Some(a.seed)),
        Command::Check(a) => ("check", serde_json::to_value(a), None),
    };
    let mut report = RunReport::new(name, config.unwrap_or_default(), seed, threads);

    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a, &mut report),
        Command::Factor(a) => commands::factor(a, &mut report),
        Command::Sample(a) => commands::sample(a, &mut report),
        Command::Check(a) => commands::check(a, &mut report),
    };
    let error = result.err().map(|e| e.to_string());
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    report.finish(error);
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {}", c.name);
    }
    if let Err(e) = report.write(cli.report.as_deref()) {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(report.exit_code as u8)
}
