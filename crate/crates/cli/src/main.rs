use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twistlab_cli::{run, ConfigError, Experiment, ExperimentConfig, OutputFormat, RunError};

#[derive(Parser)]
#[command(name = "twistlab", version, about = "Twisted ergodic integrals on translation surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Genus, zero orders and dimension of a permutation's stratum.
    StratumInfo(Common),
    /// Twisted ergodic integrals over a T grid with exponent fits.
    TwistedSweep(Common),
    /// Lyapunov exponents of the Kontsevich-Zorich cocycle.
    KzExponents(Common),
    /// Growth rate of the twisted cocycle across lambda.
    GapSweep(Common),
    /// Spectral mass bounds and local dimensions.
    Spectral(Common),
    /// Decay of Cesaro-averaged correlations.
    Weakmix(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; the experiment preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::StratumInfo(a) => (Experiment::StratumInfo, a),
        Command::TwistedSweep(a) => (Experiment::TwistedSweep, a),
        Command::KzExponents(a) => (Experiment::KzExponents, a),
        Command::GapSweep(a) => (Experiment::GapSweep, a),
        Command::Spectral(a) => (Experiment::Spectral, a),
        Command::Weakmix(a) => (Experiment::Weakmix, a),
    };
    let cfg = match load(kind, &args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(kind, &cfg, args.threads) {
        Ok(m) => {
            let failed = m.failed_tasks();
            for t in m.tasks.iter().filter(|t| !t.ok) {
                eprintln!("task {} failed: {}", t.label, t.error.as_deref().unwrap_or(""));
            }
            println!("{} tasks, {} failed, {} files in {}", m.tasks.len(), failed, m.files.len(), cfg.out.display());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load(kind: Experiment, args: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::preset(kind),
    };
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}
