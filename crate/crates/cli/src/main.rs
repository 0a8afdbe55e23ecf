//! `projdiff`: solve inverse problems from JSON run files, run the
//! verification suite, and sweep solver parameters.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver abort, 3 failed
//! verification check.

mod descriptor;
mod solve;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use projdiff::SolverConfig;

#[derive(Parser)]
#[command(name = "projdiff", version, about = "Projection gradient descent with diffusion priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log level filter, e.g. `info` or `projdiff=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(clap::Args, Clone, Default)]
pub struct Overrides {
    /// Output directory; overrides the run file's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solver seed; overrides the run file's `config.seed`.
    #[arg(long, env = "PROJDIFF_SEED")]
    pub seed: Option<u64>,
    /// Number of time steps visited.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &SolverConfig) -> SolverConfig {
        let mut c = config.clone();
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.steps {
            c.steps = Some(n);
        }
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a run file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the built-in verification checks.
    Verify {
        /// Glob over check names, families and aliases; plain text matches a prefix.
        #[arg(long)]
        filter: Option<String>,
        /// List matching checks without running them.
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, hide = true)]
        corrupt: Option<Corruption>,
    },
    /// Run the `sweep` section of a run file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Corruption {
    Gamma,
}

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }

    pub fn solver(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
}

fn cmd_verify(
    filter: Option<&str>,
    list: bool,
    overrides: &Overrides,
    corrupt: Option<Corruption>,
) -> Result<(), Failure> {
    let registry = verify::registry();
    let mut selected = Vec::new();
    for check in &registry {
        let keep = match filter {
            Some(f) => check.matches(f).with_context(|| format!("bad filter `{f}`")).map_err(Failure::config)?,
            None => true,
        };
        if keep {
            selected.push(check);
        }
    }
    if selected.is_empty() {
        return Err(Failure::config(anyhow::anyhow!("no check matches `{}`", filter.unwrap_or_default())));
    }
    if list {
        for c in &selected {
            println!("{}", c.name);
        }
        return Ok(());
    }
    let cx = verify::Context {
        seed: overrides.seed.unwrap_or(0),
        gamma_scale: matches!(corrupt, Some(Corruption::Gamma)).then_some(1.2),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(overrides.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::config(e.into()))?;
    let results = pool.install(|| verify::run_checks(&selected, &cx));
    for r in &results {
        eprintln!("{} {} ({:.2} s): {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.seconds, r.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    let report = verify::VerifyReport {
        filter: filter.map(str::to_owned),
        seed: cx.seed,
        passed: results.len() - failed.len(),
        failed: failed.len(),
        checks: results,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::config(e.into()))?;
    match &overrides.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(dir.join("verify.json"), json + "\n"))
                .with_context(|| dir.display().to_string())
                .map_err(Failure::config)?;
        }
        None => println!("{json}"),
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: 3, error: anyhow::anyhow!("failed checks: {}", failed.join(", ")) })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let result = match &cli.command {
        Command::Solve { config, overrides } => solve::cmd_solve(config, overrides),
        Command::Verify { filter, list, overrides, corrupt } => {
            cmd_verify(filter.as_deref(), *list, overrides, *corrupt)
        }
        Command::Sweep { config, overrides } => sweep::cmd_sweep(config, overrides).map(|rows| {
            let ok = rows.iter().filter(|r| r.status == "ok").count();
            log::info!("{ok}/{} runs succeeded", rows.len());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
