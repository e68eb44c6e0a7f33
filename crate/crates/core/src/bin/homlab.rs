use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use homlab::config::ExperimentConfig;
use homlab::experiments;

#[derive(Parser)]
#[command(name = "homlab", version, about = "Desk-scale stochastic homogenization experiments")]
struct Cli {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Scale hierarchy L_n, ell_n, kappa_n, D_n.
    Schedule,
    /// Sampled bounds on a realized environment.
    EnvCheck,
    /// Effective diffusivity at the first schedule rows.
    Alpha,
    /// Annulus mean exit time against Brownian Monte Carlo.
    AnnulusCheck,
    /// Exit-time tails in units of L_{n+2}^2.
    Tails,
    /// Time spent in the boundary layer.
    Barrier,
    /// Coupled quenched and Gaussian chains.
    Couple,
    /// Homogenization error against epsilon.
    Rate,
    /// Stage-by-stage audit of the discrete representation.
    Audit,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Schedule => "schedule",
            Command::EnvCheck => "env-check",
            Command::Alpha => "alpha",
            Command::AnnulusCheck => "annulus-check",
            Command::Tails => "tails",
            Command::Barrier => "barrier",
            Command::Couple => "couple",
            Command::Rate => "rate",
            Command::Audit => "audit",
        }
    }
}

fn run(cli: Cli) -> homlab::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.paths {
        cfg.paths = p;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(t) = cli.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| homlab::Error::Config(format!("thread pool: {e}")))?;
    }
    let name = cli.command.name();
    let manifest = experiments::run(name, &cfg)?;
    println!("{name}: wrote {} files to {}", manifest.outputs.len() + 1, cfg.out.display());
    experiments::list_outputs(&manifest, std::io::stdout().lock())?;
    println!("{}", serde_json::to_string_pretty(&manifest.summary)?);
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
