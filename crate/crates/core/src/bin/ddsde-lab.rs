use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddsde_core::harness::{config_hash, run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "ddsde-lab", version, about = "Experiments for distribution-dependent SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-field convergence sweep over the N schedule.
    MflSweep(Common),
    /// Coupled Euler against Picard on the same inputs.
    TanakaCheck(Common),
    /// Coupled-input stability against the family constant.
    Stability(Common),
    /// Sup-density propagation for convolution kernels.
    Density(Common),
    /// Tabulate stability bounds.
    BoundsTable(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Replace the seed list by `s, s+1, …` of the same length.
    #[arg(long)]
    seed_override: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn run(kind: ExperimentKind, args: &Common) -> Result<bool, String> {
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let (mut cfg, text) = ExperimentConfig::load(&args.config).map_err(|e| e.to_string())?;
    if cfg.experiment != kind {
        return Err(format!(
            "config describes a {} experiment, not {}",
            cfg.experiment.name(),
            kind.name()
        ));
    }
    if let Some(s) = args.seed_override {
        cfg.override_seeds(s);
    }
    let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
    report
        .write(&args.out, &config_hash(&text))
        .map_err(|e| e.to_string())?;
    print!("{}", report.summary());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::MflSweep(a) => (ExperimentKind::MflSweep, a),
        Command::TanakaCheck(a) => (ExperimentKind::TanakaCheck, a),
        Command::Stability(a) => (ExperimentKind::Stability, a),
        Command::Density(a) => (ExperimentKind::Density, a),
        Command::BoundsTable(a) => (ExperimentKind::BoundsTable, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
