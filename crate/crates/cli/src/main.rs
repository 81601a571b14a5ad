use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use risk_pde_cli::{commands, CliError, Config, Criterion, RunManifest};

/// Finite-difference HJB solver and oracles for optimized certainty equivalents.
#[derive(Debug, Parser)]
#[command(name = "risk-pde", version)]
struct Cli {
    /// Config file (`key = value` text, or a run manifest `.json`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides one key, e.g. `--set grid.steps=800`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (`output.dir`).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Master seed (`seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the HJB equation and write value slices.
    SolveHjb,
    /// Monte-Carlo OCE values at the query points.
    OceMc,
    /// Closed-form and dynamic-programming oracles.
    Oracle {
        /// `entropic`, `mmv`, `cvar` or `dpp` (`oracle.which`).
        #[arg(long)]
        which: Option<String>,
    },
    /// Build a martingale diffusion whose terminal law is a target law.
    BassEmbed {
        /// `gaussian`, `uniform`, `two-point` or `table:<file>` (`bass.law`).
        #[arg(long)]
        law: Option<String>,
        /// Horizon (`model.horizon`).
        #[arg(long = "T")]
        horizon: Option<f64>,
        /// Gauss–Hermite order (`bass.quad_order`).
        #[arg(long)]
        quad_order: Option<usize>,
    },
    /// Solver, Monte-Carlo and oracle values side by side with verdicts.
    Compare,
    /// Run acceptance criteria; without flags only the invariant suite.
    Check {
        /// Every criterion.
        #[arg(long)]
        acceptance: bool,
        /// Comma-separated criterion ids, e.g. `E1,C2`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveHjb => "solve-hjb",
            Command::OceMc => "oce-mc",
            Command::Oracle { .. } => "oracle",
            Command::BassEmbed { .. } => "bass-embed",
            Command::Compare => "compare",
            Command::Check { .. } => "check",
        }
    }
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let mut c = Config::default();
    if let Some(path) = &cli.config {
        c.apply_file(path)?;
    }
    let mut flags = cli.set.clone();
    if let Some(o) = &cli.out {
        flags.push(format!("output.dir={o}"));
    }
    if let Some(s) = cli.seed {
        flags.push(format!("seed={s}"));
    }
    match &cli.command {
        Command::Oracle { which: Some(w) } => flags.push(format!("oracle.which={w}")),
        Command::BassEmbed { law, horizon, quad_order } => {
            if let Some(l) = law {
                flags.push(format!("bass.law={l}"));
            }
            if let Some(t) = horizon {
                flags.push(format!("model.horizon={t}"));
            }
            if let Some(q) = quad_order {
                flags.push(format!("bass.quad_order={q}"));
            }
        }
        _ => {}
    }
    c.apply_flags(&flags)?;
    Ok(c)
}

fn criteria(acceptance: bool, only: &[String]) -> Result<Vec<Criterion>, CliError> {
    if !only.is_empty() {
        return only
            .iter()
            .map(|id| Criterion::parse(id).ok_or_else(|| CliError::Input(format!("unknown criterion '{id}'"))))
            .collect();
    }
    Ok(if acceptance { Criterion::ALL.to_vec() } else { vec![Criterion::P1] })
}

fn threads() -> Result<Option<usize>, CliError> {
    match std::env::var("RISK_PDE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                risk_pde::par::init_threads(n);
                Ok(Some(n))
            }
            _ => Err(CliError::Input(format!("RISK_PDE_THREADS = '{v}': expected a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let started = Instant::now();
    let threads = threads()?;
    let c = resolve(cli)?;
    let dir = commands::out_dir(&c);
    std::fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest::new(cli.command.name(), &c, c.u64("seed")?, threads);
    match &cli.command {
        Command::SolveHjb => commands::solve_hjb(&c, &mut manifest)?,
        Command::OceMc => commands::oce_mc(&c, &mut manifest)?,
        Command::Oracle { .. } => commands::oracle(&c, &mut manifest)?,
        Command::BassEmbed { .. } => commands::bass_embed(&c, &mut manifest)?,
        Command::Compare => commands::compare(&c, &mut manifest)?,
        Command::Check { acceptance, only } => commands::check(&c, &mut manifest, &criteria(*acceptance, only)?)?,
    }
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(&dir.join("manifest.json"))?;
    for ch in &manifest.checks {
        println!("{} {}: {}", if ch.passed { "PASS" } else { "FAIL" }, ch.name, ch.detail);
    }
    Ok(manifest.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
