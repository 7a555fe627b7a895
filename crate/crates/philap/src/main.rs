use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use philap::cli::{run, verify, RunConfig};
use philap::Error;

#[derive(Parser)]
#[command(
    name = "philap",
    about = "Branch curves mu(xi) of T-periodic solutions for phi-Laplacian pendulum equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute sweeps described by JSON config files and emit branch data
    Run {
        /// One or more run configurations
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Re-run shooting verification for every row of a stored branch file
    Verify {
        config: PathBuf,
        branch_csv: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::UnknownCatalogKey(_)
        | Error::NonzeroMeanForcing { .. }
        | Error::Json(_)
        | Error::Io(_) => 2,
        Error::FirstPointUnsolvable { .. } => 3,
        _ => 1,
    }
}

fn run_one(path: &PathBuf) -> u8 {
    let config = match RunConfig::from_path(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return 2;
        }
    };
    match run(&config) {
        Ok(outcome) => {
            println!(
                "{}: {} points ({} unsolved), {} verification failure(s) -> {}",
                path.display(),
                outcome.curve.points.len(),
                outcome.curve.unsolved.len(),
                outcome.verification_failures,
                outcome.out_dir.display()
            );
            if outcome.all_verified {
                0
            } else {
                for p in outcome.curve.points.iter().filter(|p| {
                    p.verification.as_ref().map_or(false, |v| !v.passed)
                }) {
                    eprintln!(
                        "  flagged: xi = {:.6}, shooting defect {:.3e}",
                        p.solution.xi,
                        p.verification.as_ref().unwrap().periodicity_defect
                    );
                }
                for xi in &outcome.curve.unsolved {
                    eprintln!("  unsolved: xi = {xi:.6}");
                }
                1
            }
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            exit_code_for(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run { configs } => configs.iter().map(run_one).max().unwrap_or(2),
        Command::Verify { config, branch_csv } => {
            match RunConfig::from_path(&config).and_then(|c| verify(&c, &branch_csv)) {
                Ok(outcome) => {
                    for row in &outcome.rows {
                        println!(
                            "xi = {:>12.6}  defect = {:.3e}  {}",
                            row.xi,
                            row.defect,
                            if row.passed { "ok" } else { "FAIL" }
                        );
                    }
                    if outcome.all_passed {
                        0
                    } else {
                        1
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    exit_code_for(&e)
                }
            }
        }
    };
    ExitCode::from(status)
}
