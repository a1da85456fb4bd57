use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use opinion_mf::config::{ExperimentConfig, ExperimentKind};
use opinion_mf::harness;

/// Opinion dynamics on directed block models against their mean-field limit.
#[derive(Parser)]
#[command(name = "opinion-mf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories on sampled graphs.
    Simulate(RunArgs),
    /// Write mean-field matrices and regime statistics.
    Meanfield(RunArgs),
    /// Graph-vs-mean-field error curves.
    Error(RunArgs),
    /// Propagation-of-chaos statistics.
    Chaos(RunArgs),
    /// Long-run moments against the stationary law.
    Stationary(RunArgs),
    /// Monte Carlo check of the concentration bounds.
    Concentration(RunArgs),
    /// Galton-Watson tree scaling and neighbourhood diagnostics.
    Tree(RunArgs),
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "OPINION_MF_THREADS")]
    threads: Option<usize>,
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<(), ExitCode> {
    let mut cfg = load(&args.config)?;
    cfg.kind = kind;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from(&cfg.out));
    match harness::run(&cfg, &out) {
        Ok(m) => {
            println!("{} finished in {:.2}s; wrote {} to {}", m.kind, m.wall_time_secs, m.outputs.join(", "), out.display());
            Ok(())
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(e.exit_code() as u8))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => execute(ExperimentKind::Simulate, a),
        Command::Meanfield(a) => execute(ExperimentKind::Meanfield, a),
        Command::Error(a) => execute(ExperimentKind::Error, a),
        Command::Chaos(a) => execute(ExperimentKind::Chaos, a),
        Command::Stationary(a) => execute(ExperimentKind::Stationary, a),
        Command::Concentration(a) => execute(ExperimentKind::Concentration, a),
        Command::Tree(a) => execute(ExperimentKind::Tree, a),
        Command::Validate { config } => load(&config).map(|cfg| {
            println!("{}: ok ({} experiment, K = {}, {} grid points)", config.display(), cfg.kind, cfg.model.k, cfg.n_grid.len());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
