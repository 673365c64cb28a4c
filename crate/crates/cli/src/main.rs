use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use pathlab::config::RunConfig;
use pathlab::{failed_manifest, run};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Propagate,
    Evolve,
    Diffuse,
    Huygens,
    Pairpaths,
    Positivity,
    Born,
    Reflect1d,
    Verify,
}

/// Path-summation laboratory: run one experiment and write its artifacts.
#[derive(Debug, Parser)]
#[command(name = "pathlab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML parameter file (`.json` is read as JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, default_value = "pathlab-out")]
    out: PathBuf,
    /// Seed for every random stream; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "PATHLAB_THREADS")]
    threads: Option<usize>,
}

fn name(c: Command) -> &'static str {
    match c {
        Command::Propagate => "propagate",
        Command::Evolve => "evolve",
        Command::Diffuse => "diffuse",
        Command::Huygens => "huygens",
        Command::Pairpaths => "pairpaths",
        Command::Positivity => "positivity",
        Command::Born => "born",
        Command::Reflect1d => "reflect1d",
        Command::Verify => "verify",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let experiment = name(cli.command);
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match RunConfig::load(experiment, cli.config.as_deref(), cli.seed)
        .with_context(|| format!("configuration for '{experiment}'"))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            failed_manifest(experiment, cli.seed, &e, &cli.out);
            return ExitCode::from(2);
        }
    };
    let m = run(&cfg, &cli.out);
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(e) = &m.error {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if experiment != "verify" {
        for c in &m.checks {
            println!(
                "{} {} = {:e} ({} {:e})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.comparison,
                c.threshold
            );
        }
    }
    println!("artifacts in {}: {}", cli.out.display(), m.artifacts.join(", "));
    if m.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
