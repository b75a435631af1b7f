use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zrp_core::harness::{load_config, run_experiment, Experiment};
use zrp_core::Error;

#[derive(Parser)]
#[command(name = "zrp", version, about = "Zero-range process simulator and hydrodynamic comparison harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Particle trajectories with snapshots at the checkpoints.
    Simulate(Common),
    /// The limit PDE alone.
    Pde(Common),
    /// Particle system against the PDE.
    Compare(Common),
    /// Constant-rate runs tracking the largest site.
    Condense(Common),
    /// Tables of Z, M, R, Φ and f̃.
    EnsembleTable(Common),
    /// `compare` over several lattice sides.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; every key is optional.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(experiment: Experiment, args: Common) -> Result<(), Error> {
    let mut cfg = load_config(&args.config)?;
    cfg.experiment = experiment;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let files = run_experiment(&cfg, &dir)?;
    for f in files {
        println!("{}", dir.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Pde(a) => (Experiment::Pde, a),
        Command::Compare(a) => (Experiment::Compare, a),
        Command::Condense(a) => (Experiment::Condense, a),
        Command::EnsembleTable(a) => (Experiment::EnsembleTable, a),
        Command::Sweep(a) => (Experiment::Sweep, a),
    };
    match run(experiment, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
