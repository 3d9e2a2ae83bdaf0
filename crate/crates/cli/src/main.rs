use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taps_cli::config::Mode;
use taps_cli::gallery::{gallery_entry, list_gallery, run_gallery};
use taps_cli::{parse_config, run, Overrides, Status};

#[derive(Parser)]
#[command(name = "taps", version, about = "Separated-representation space-parameter-time solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to TAPS_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write factor files and a run log.
    Solve(RunArgs),
    /// Run a manufactured-solution convergence study.
    Study(RunArgs),
    /// Compare against the full-order tensor-grid solve (tiny instances only).
    OracleCompare(RunArgs),
    /// Check a configuration and print diagnostics.
    Validate(RunArgs),
    /// List or run gallery entries.
    Gallery {
        /// Entry to run; lists entries when omitted.
        id: Option<String>,
    },
}

fn run_mode(mode: Mode, args: RunArgs) -> Status {
    let mut cfg = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Status::Failed;
        }
    };
    Overrides { mode: Some(mode), out: args.out, seed: args.seed, threads: args.threads }.apply(&mut cfg);
    run(&cfg)
}

fn gallery(id: Option<String>) -> Status {
    let Some(id) = id else {
        for e in list_gallery() {
            println!("{:<20} {}", e.id, e.description);
        }
        return Status::Success;
    };
    let result = gallery_entry(&id).and_then(|e| run_gallery(&e));
    match result {
        Ok(r) => {
            for c in &r.checks {
                println!("{} {}: {:.4} (bound {})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
            }
            println!("{}: {:.1}s", r.id, r.wall_seconds);
            if r.passed {
                Status::Success
            } else {
                Status::NotConverged
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            Status::Failed
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Solve(a) => run_mode(Mode::Solve, a),
        Command::Study(a) => run_mode(Mode::Study, a),
        Command::OracleCompare(a) => run_mode(Mode::OracleCompare, a),
        Command::Validate(a) => run_mode(Mode::Validate, a),
        Command::Gallery { id } => gallery(id),
    };
    ExitCode::from(status.code() as u8)
}
