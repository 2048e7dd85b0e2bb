//! `nurd`: run experiments from a config file and evaluate the check suites.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 invalid config,
//! 3 non-finite value during training.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use nurd_core::experiment::{run_experiment, run_suite, EvalSplit, ExperimentConfig, Suite};
use nurd_core::NurdError;

#[derive(Parser)]
#[command(name = "nurd", version, about = "Nuisance-randomized distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON or TOML config.
    Run {
        config: PathBuf,
        /// Comma-separated seeds replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        seed_override: Option<Vec<u64>>,
        /// Output directory replacing the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a check suite and print one pass/fail line per item.
    Check {
        #[arg(long, value_enum)]
        suite: SuiteArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Analytic,
    Nn,
    E2e,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Analytic => Suite::Analytic,
            SuiteArg::Nn => Suite::Nn,
            SuiteArg::E2e => Suite::E2e,
        }
    }
}

const EXIT_FAILED: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_NON_FINITE: u8 = 3;

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<NurdError>() {
        Some(NurdError::NonFinite { .. }) => EXIT_NON_FINITE,
        Some(NurdError::InvalidParameter(_) | NurdError::Parse(_)) => EXIT_INVALID_CONFIG,
        _ => EXIT_FAILED,
    }
}

fn load_config(
    path: &PathBuf,
    seed_override: Option<Vec<u64>>,
    out: Option<PathBuf>,
) -> anyhow::Result<(ExperimentConfig, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text, path)?;
    if let Some(seeds) = seed_override {
        cfg.seeds = seeds;
    }
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    cfg.validate()?;
    Ok((cfg, text))
}

fn run(path: PathBuf, seed_override: Option<Vec<u64>>, out: Option<PathBuf>) -> ExitCode {
    let (cfg, text) = match load_config(&path, seed_override, out) {
        Ok(loaded) => loaded,
        Err(e) => {
            eprintln!("error: invalid config: {e:#}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "config.json".into());
    let start = Instant::now();
    match run_experiment(&cfg, &text, &name).map_err(anyhow::Error::from) {
        Ok(out) => {
            for split in [EvalSplit::Test, EvalSplit::HeldoutPtr, EvalSplit::HeldoutPind] {
                if let Some(acc) = out.summary.accuracy(split) {
                    println!(
                        "{:<16} {:<13} accuracy {:.4} +- {:.4} over {} seeds",
                        cfg.method.name(),
                        split.name(),
                        acc.mean,
                        acc.stderr,
                        acc.n
                    );
                }
            }
            println!(
                "wrote {} in {:.1}s",
                out.output_dir.display(),
                start.elapsed().as_secs_f64()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn check(suite: Suite) -> ExitCode {
    let start = Instant::now();
    let items = run_suite(suite);
    for item in &items {
        let mark = if item.passed { "PASS" } else { "FAIL" };
        println!("{mark}  {}: {}", item.name, item.detail);
    }
    let passed = items.iter().filter(|i| i.passed).count();
    println!(
        "{passed}/{} checks passed in {:.1}s",
        items.len(),
        start.elapsed().as_secs_f64()
    );
    if passed == items.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed_override,
            out,
        } => run(config, seed_override, out),
        Command::Check { suite } => check(suite.into()),
    }
}
