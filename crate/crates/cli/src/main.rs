use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use env_logger::Env;

use neklab_cli::{parse_config, run, ConfigError, Overrides, Status};

/// Normal forms, periodic approximation and stability experiments near
/// elliptic equilibria with a transverse component.
///
/// Exit codes: 0 when every asserted bound holds, 1 on a bound failure,
/// 2 on a configuration error. Set NEKLAB_LOG=error|info|debug for logs.
#[derive(Debug, Parser)]
#[command(name = "neklab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Best simultaneous approximation and the nearby periodic frequency.
    Dirichlet(Common),
    /// Iterated averaging normal form with the halving check.
    NormalForm(Common),
    /// Action drift of one orbit against the recipe's bound.
    Drift(Common),
    /// Large-coupling limit against the constrained orbit.
    Constrained(Common),
    /// Small-coupling drift scaling over a theta grid.
    SmallKappa(Common),
    /// Drift over a grid of couplings below the prescribed one.
    Variant(Common),
    /// Evaluates the inequalities of one lemma or theorem.
    CheckConditions(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (overrides `workers`).
    #[arg(long)]
    workers: Option<usize>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Dirichlet(c) => ("dirichlet", c),
            Command::NormalForm(c) => ("normal-form", c),
            Command::Drift(c) => ("drift", c),
            Command::Constrained(c) => ("constrained", c),
            Command::SmallKappa(c) => ("small-kappa", c),
            Command::Variant(c) => ("variant", c),
            Command::CheckConditions(c) => ("check-conditions", c),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("NEKLAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Status::ConfigError as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, common) = cli.command.parts();
    let parsed = std::fs::read_to_string(&common.config)
        .map_err(|source| ConfigError::Io {
            path: common.config.clone(),
            source,
        })
        .and_then(|text| parse_config(&text));
    let cfg = match parsed {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Status::ConfigError as u8);
        }
    };
    if common.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(Status::ConfigError as u8);
    }
    let overrides = Overrides {
        output: common.output.clone(),
        workers: common.workers,
        seed: common.seed,
    };
    ExitCode::from(run(name, &cfg, &overrides, &common.config) as u8)
}
