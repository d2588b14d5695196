use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::ExperimentConfig;
use output::{Failure, Outcome};

#[derive(Parser, Debug)]
#[command(name = "stokes-shape", version, about = "Stokes eigenvalue shape-calculus experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML configuration; defaults are used for absent keys and sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the resolved plan and exit without computing.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmd {
    /// Entire functions M₁–M₁₀: series against quadrature, identities.
    Specfun,
    /// Fundamental-tensor PDE residuals (and optionally the jump relation).
    KernelsCheck,
    /// Eigenpairs on the disk, ball, or a perturbed disk.
    Eigs,
    /// Hadamard eigenvalue derivatives on the disk.
    ShapeDerivative,
    /// Integer resonance relations in a spectrum.
    Resonance,
    /// ε-sweeps of the bump expansion.
    Asymptotics,
}

impl Cmd {
    pub fn name(self) -> &'static str {
        match self {
            Cmd::Specfun => "specfun",
            Cmd::KernelsCheck => "kernels-check",
            Cmd::Eigs => "eigs",
            Cmd::ShapeDerivative => "shape-derivative",
            Cmd::Resonance => "resonance",
            Cmd::Asymptotics => "asymptotics",
        }
    }
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}\n");
    eprintln!("{}", Cli::command().render_usage());
    ExitCode::from(2)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, String> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            ExperimentConfig::parse(&text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);

    if cli.dry_run {
        let plan = commands::plan(cli.cmd, &cfg, &cli.out, seed);
        println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes"));
        return ExitCode::SUCCESS;
    }

    let outcome: Outcome = match commands::run(cli.cmd, &cfg, seed) {
        Ok(o) => o,
        Err(Failure::Input(msg)) => return usage_error(&msg),
        Err(Failure::Diagnostic(msg)) => {
            eprintln!("FAIL {}: {msg}", cli.cmd.name());
            return ExitCode::from(1);
        }
    };
    if let Err(e) = outcome.write(&cli.out, cli.cmd.name()) {
        eprintln!("error: cannot write to {}: {e}", cli.out.display());
        return ExitCode::from(2);
    }
    for c in &outcome.checks {
        println!("{} {} = {:.3e} (tol {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tol);
    }
    if outcome.checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
