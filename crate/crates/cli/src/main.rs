use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use permgibbs_cli::commands;
use permgibbs_cli::config::{Layers, RunConfig};
use permgibbs_core::verify::VerifyOptions;
use permgibbs_core::Result;

/// Spatial random permutations on a Poisson-disordered lattice: regime
/// constants, exact specifications and perfect samples.
#[derive(Parser)]
#[command(name = "permgibbs", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, env = "PERMGIBBS_CONFIG")]
    config: Option<PathBuf>,

    /// Config override, repeatable: `--set alpha=2 --set box=0..6`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    alpha: Option<f64>,

    #[arg(long, global = true)]
    rho: Option<f64>,

    #[arg(long, global = true)]
    dim: Option<usize>,

    #[arg(long, global = true)]
    n_samples: Option<usize>,

    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Write the artifact here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Constants and existence/uniqueness conditions; exits 1 when
    /// uniqueness is not established.
    Regime {
        /// Use the closed quadratic bound (1 + √(π/α))^d − 1 for φ.
        #[arg(long)]
        closed_bound: bool,
    },
    /// Sample an environment (or a continuum point set and its
    /// discretization).
    GenEnv {
        #[arg(long)]
        continuum: bool,
    },
    /// Perfect samples as JSON lines.
    Sample {
        /// Write the marks behind each sample to this directory.
        #[arg(long)]
        dump_marks: Option<PathBuf>,
    },
    /// The exact specification table.
    ExactDist,
    /// Cycle statistics of a sample file or of fresh samples.
    Stats {
        /// JSON lines produced by `sample`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write the cycle-length histogram as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the acceptance suite; exits 1 if a criterion fails.
    Verify {
        /// Scale the heaviest cycle weight in the sampler (negative control).
        #[arg(long)]
        inject_fault: bool,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        #[arg(long)]
        suite_seed: Option<u64>,
    },
}

fn resolve(cli: &Cli, closed_bound: bool) -> Result<RunConfig> {
    let mut layers = Layers::defaults();
    if let Some(path) = &cli.config {
        layers.apply_file(path)?;
    }
    layers.apply_env(std::env::vars())?;
    let mut flags: Vec<String> = Vec::new();
    let mut flag = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            flags.push(format!("{k}={v}"));
        }
    };
    flag("seed", cli.seed.map(|v| v.to_string()));
    flag("alpha", cli.alpha.map(|v| v.to_string()));
    flag("rho", cli.rho.map(|v| v.to_string()));
    flag("dim", cli.dim.map(|v| v.to_string()));
    flag("n_samples", cli.n_samples.map(|v| v.to_string()));
    flag("closed_bound", closed_bound.then(|| "true".to_string()));
    layers.apply_overrides(cli.set.iter().map(String::as_str))?;
    layers.apply_overrides(flags.iter().map(String::as_str))?;
    layers.resolve()
}

fn run(cli: &Cli) -> Result<i32> {
    let mut out: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let code = match &cli.command {
        Command::Regime { closed_bound } => commands::regime(&resolve(cli, *closed_bound)?, &mut out)?,
        Command::GenEnv { continuum } => commands::gen_env(&resolve(cli, false)?, *continuum, &mut out)?,
        Command::Sample { dump_marks } => {
            commands::sample(&resolve(cli, false)?, cli.jobs, dump_marks.as_deref(), &mut out)?
        }
        Command::ExactDist => commands::exact_dist(&resolve(cli, false)?, &mut out)?,
        Command::Stats { input, csv } => commands::stats(
            &resolve(cli, false)?,
            cli.jobs,
            input.as_deref(),
            csv.as_deref(),
            &mut out,
        )?,
        Command::Verify {
            inject_fault,
            only,
            suite_seed,
        } => {
            let defaults = VerifyOptions::default();
            let opts = VerifyOptions {
                seed: suite_seed.unwrap_or(defaults.seed),
                inject_fault: *inject_fault,
                ..defaults
            };
            commands::verify(&opts, only, cli.jobs, &mut out, &mut io::stderr())?
        }
    };
    out.flush()?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
