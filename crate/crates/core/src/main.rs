use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sigma_wave::cli::{run_command, Command, ExperimentConfig, CONFIG_KEYS_HELP};

#[derive(Parser)]
#[command(name = "sigma-wave", version, about = "Stochastic O(N) linear sigma model experiments", after_help = CONFIG_KEYS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML configuration file; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overrides experiment.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to SIGMA_WAVE_THREADS. Results do not depend on it.
    #[arg(long, global = true, env = "SIGMA_WAVE_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
#[command(after_help = CONFIG_KEYS_HELP)]
enum Sub {
    /// Table of sigma_M(t) and alpha_M.
    RenormTable,
    /// HLSM_N driven by zero-data stochastic convolutions.
    SimulateHlsm,
    /// Replica mean-field residual system.
    SimulateMeanfield,
    /// Distance of Gibbs-data HLSM_N to the limit against N, with a slope fit.
    ConvergenceRate,
    /// Law-of-large-numbers norms against N, with slope fits.
    LlnDecay,
    /// MALA samples of the truncated Gibbs measure.
    SampleGibbs,
    /// Gibbs samples evolved to T and compared with the initial law.
    InvarianceCheck,
    /// Commutator defect of the I-operator against M.
    Commutator,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::RenormTable => Command::RenormTable,
            Sub::SimulateHlsm => Command::SimulateHlsm,
            Sub::SimulateMeanfield => Command::SimulateMeanfield,
            Sub::ConvergenceRate => Command::ConvergenceRate,
            Sub::LlnDecay => Command::LlnDecay,
            Sub::SampleGibbs => Command::SampleGibbs,
            Sub::InvarianceCheck => Command::InvarianceCheck,
            Sub::Commutator => Command::Commutator,
        }
    }
}

fn run(cli: Cli) -> sigma_wave::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| sigma_wave::SigmaError::Config { key: "threads".into(), reason: e.to_string() })?;
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    let manifest = run_command(cli.command.into(), &cfg)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} done: {} (config {})", manifest.command.name(), cfg.output.dir, &manifest.config_hash[..12]);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
