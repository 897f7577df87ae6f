//! `commlab`: runs scenario files of pointwise checks, positivity
//! certificates, scans and evolutions, and writes a JSON summary with CSV
//! ledgers and binary field dumps next to it.
//!
//! Exit status: 0 when no check fails, 1 when some check fails, 2 on a
//! configuration error (nothing is written), 3 on a runtime error.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ScenarioConfig, Suite};

#[derive(Parser)]
#[command(name = "commlab", version, about = "Multiplier commutator checks for Schrödinger operators on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pointwise sweeps (pair bounds, claim signs, negative regions, axial conditions).
    VerifyPointwise(Common),
    /// Single positivity certificates.
    Certify(Common),
    /// Certificate scans along N or K ladders.
    Scan(Common),
    /// Time evolutions with Morawetz ledgers.
    Evolve(Common),
    /// Every check of the scenario.
    Report(Common),
    /// Lists the bundled presets, or prints one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the scenario's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn load(common: &Common) -> Result<ScenarioConfig, String> {
    let (text, origin) = match (&common.config, &common.preset) {
        (Some(path), _) => (std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?, path.display().to_string()),
        (None, Some(name)) => {
            let known: Vec<&str> = config::PRESETS.iter().map(|p| p.0).collect();
            let text = config::preset(name).ok_or_else(|| format!("unknown preset {name:?}; known: {}", known.join(", ")))?;
            (text.to_string(), format!("preset {name}"))
        }
        (None, None) => return Err("need --config or --preset".into()),
    };
    let mut cfg = ScenarioConfig::parse(&text, &origin).map_err(|e| e.to_string())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(suite: Suite, common: Common) -> ExitCode {
    let cfg = match load(&common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: --threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let out = run::output_dir(&cfg, common.out);
    match run::run_suite(&cfg, suite, &out) {
        Ok(summary) => {
            for c in &summary.checks {
                println!("{:<13} {:<24} {}", format!("{:?}", c.verdict).to_lowercase(), c.name, c.kind);
            }
            println!("summary: {}", out.join("summary.json").display());
            if summary.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::VerifyPointwise(c) => execute(Suite::VerifyPointwise, c),
        Command::Certify(c) => execute(Suite::Certify, c),
        Command::Scan(c) => execute(Suite::Scan, c),
        Command::Evolve(c) => execute(Suite::Evolve, c),
        Command::Report(c) => execute(Suite::Report, c),
        Command::Presets { name: None } => {
            config::PRESETS.iter().for_each(|(n, _)| println!("{n}"));
            ExitCode::SUCCESS
        }
        Command::Presets { name: Some(n) } => match config::preset(&n) {
            Some(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("unknown preset {n:?}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}
