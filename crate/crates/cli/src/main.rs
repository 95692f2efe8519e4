use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geospar_cli::commands::{cmd_bench, cmd_build, cmd_replay, cmd_ujl, cmd_verify, Outcome};
use geospar_cli::io::{read_points, read_trace};
use geospar_cli::{CliError, RunConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "geospar", version, about = "Dynamic kernel graph sparsifier harness")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run the spectral and consistency audits.
    #[arg(long, global = true)]
    verify: bool,
    /// Audit stride for `replay` (overrides the config).
    #[arg(long, global = true)]
    checkpoint: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Initialize the sparsifier on a point file and summarize it.
    Build {
        #[arg(long)]
        points: PathBuf,
    },
    /// Replay a JSON-lines trace of moves and sketch updates.
    Replay {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Rebuild vs update timings over the configured size grid.
    Bench {
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Distance estimates for query points.
    Ujl {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        queries: PathBuf,
    },
    /// Spectral check plus the unsketched approximation audit.
    Verify {
        #[arg(long)]
        points: PathBuf,
    },
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(c) = cli.checkpoint {
        cfg.checkpoint = c;
    }
    match &cli.command {
        Command::Build { points } => cmd_build(&read_points(points)?, &cfg, cli.verify),
        Command::Replay { points, trace } => cmd_replay(&read_points(points)?, &read_trace(trace)?, &cfg, cli.verify),
        Command::Bench { points } => {
            let pts = points.as_deref().map(read_points).transpose()?;
            cmd_bench(pts.as_deref(), &cfg)
        }
        Command::Ujl { points, queries } => cmd_ujl(&read_points(points)?, &read_points(queries)?, &cfg, cli.verify),
        Command::Verify { points } => cmd_verify(&read_points(points)?, &cfg),
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => return fail(e.kind(), e.to_string()),
    };
    let text = serde_json::to_string_pretty(&outcome.report).expect("reports serialize") + "\n";
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                return fail("io", format!("{}: {e}", path.display()));
            }
        }
        None => print!("{text}"),
    }
    if outcome.ok {
        ExitCode::SUCCESS
    } else {
        fail("check", "one or more audits failed; see the report".into())
    }
}
