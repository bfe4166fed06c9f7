use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use qlpar_core::harness::{parse_config, run, validate, Experiment, Kind, Report};

#[derive(Parser)]
#[command(
    name = "qlpar",
    version,
    about = "Pseudospectral solver and verification suite for quasilinear parabolic equations on flat tori"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the initial value problem.
    Solve(RunArgs),
    /// Build the compatible time-jet of the initial datum.
    Jet(RunArgs),
    /// Sample an inequality.
    Verify {
        #[command(subcommand)]
        which: Verify,
    },
    /// Run a multi-solve study.
    Study {
        #[command(subcommand)]
        which: Study,
    },
}

#[derive(Subcommand)]
enum Verify {
    Garding(RunArgs),
    Gn(RunArgs),
    Embedding(RunArgs),
}

#[derive(Subcommand)]
enum Study {
    Convergence(RunArgs),
    Depend(RunArgs),
    Uniqueness(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (JSON). Repeat to run several concurrently.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sample and study fan-out.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (Kind, RunArgs) {
        match self {
            Command::Solve(a) => (Kind::Solve, a),
            Command::Jet(a) => (Kind::Jet, a),
            Command::Verify { which: Verify::Garding(a) } => (Kind::Garding, a),
            Command::Verify { which: Verify::Gn(a) } => (Kind::Gn, a),
            Command::Verify { which: Verify::Embedding(a) } => (Kind::Embedding, a),
            Command::Study { which: Study::Convergence(a) } => (Kind::Convergence, a),
            Command::Study { which: Study::Depend(a) } => (Kind::Depend, a),
            Command::Study { which: Study::Uniqueness(a) } => (Kind::Uniqueness, a),
        }
    }
}

fn load(path: &Path, kind: Kind, seed: Option<u64>) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut exp = parse_config(&text, Some(kind)).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        let mut config = exp.config.clone();
        config.seed = seed;
        exp = validate(config, Some(kind))?;
    }
    Ok(exp)
}

fn output_dir(args: &RunArgs, path: &Path, exp: &Experiment) -> PathBuf {
    let base = args.out.clone().unwrap_or_else(|| exp.config.output_dir.clone());
    if args.config.len() > 1 {
        base.join(path.file_stem().unwrap_or_default())
    } else {
        base
    }
}

fn execute(kind: Kind, args: &RunArgs, path: &Path) -> Result<(PathBuf, Report)> {
    let exp = load(path, kind, args.seed)?;
    let report = run(&exp);
    let dir = output_dir(args, path, &exp);
    report.write(&dir).with_context(|| format!("writing report to {}", dir.display()))?;
    Ok((dir, report))
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcomes: Vec<Result<(PathBuf, Report)>> = args.config.par_iter().map(|p| execute(kind, &args, p)).collect();
    let mut all_passed = true;
    for (path, outcome) in args.config.iter().zip(outcomes) {
        match outcome {
            Ok((dir, report)) => {
                for (name, c) in &report.status {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!("[{tag}] {}/{name}: {}", kind.name(), c.detail);
                }
                println!("report: {}", dir.join("report.json").display());
                all_passed &= report.passed();
            }
            Err(e) => {
                eprintln!("error: {}: {e:#}", path.display());
                all_passed = false;
            }
        }
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
