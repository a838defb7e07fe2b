use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pairlik::covariance::Family;
use pairlik_cli::{run, CliError, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "pairlik", version, about = "Covariance estimation for Gaussian random fields")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate replicates on the configured design.
    Simulate(Common),
    /// Fit every configured method to a data table.
    Fit(Common),
    /// Time one evaluation of each objective per design level.
    Benchmark(Common),
    /// Efficiency curves over matrix sparsity.
    Are(Common),
    /// Simulate-and-fit Monte Carlo study.
    Study(Common),
    /// Leave-one-out scores with and without a nugget.
    Scores(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated method labels, e.g. `ML,PL_M(0.1)`.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    taper_range: Option<f64>,
    /// Covariance family.
    #[arg(long)]
    model: Option<String>,
    /// Observation table with `x,y,z` or `lon,lat,z` columns.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Replicate to read from a multi-replicate table.
    #[arg(long)]
    rep: Option<u64>,
}

fn execute(cmd: Command, a: &Common) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let family = a
        .model
        .as_deref()
        .map(|m| m.parse::<Family>().map_err(|e| CliError::Config(format!("--model: {e}"))))
        .transpose()?;
    cfg.apply(&Overrides {
        seed: a.seed,
        out: a.out.clone(),
        methods: a.method.as_ref().map(|m| m.split(',').map(|s| s.trim().to_string()).collect()),
        cutoff: a.cutoff,
        taper_range: a.taper_range,
        family,
        data: a.data.clone(),
        rep: a.rep,
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    let m = pool.install(|| run(cmd, &cfg))?;
    eprintln!("wrote {} to {}", m.outputs.join(", "), cfg.output.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Fit(a) => (Command::Fit, a),
        Cmd::Benchmark(a) => (Command::Benchmark, a),
        Cmd::Are(a) => (Command::Are, a),
        Cmd::Study(a) => (Command::Study, a),
        Cmd::Scores(a) => (Command::Scores, a),
    };
    match execute(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pairlik: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
