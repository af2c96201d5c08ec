use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levylab_cli::{catalog, run_file, RunError};

#[derive(Parser)]
#[command(name = "levylab", about = "Short-time scaling experiments for Lévy-driven SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Run { config: PathBuf },
    /// List drivers, coefficients, scalings and verifiers.
    List,
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", catalog());
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("levylab {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Command::Run { config } => match run_file(&config) {
            Ok(out) => {
                for r in &out.report.results {
                    println!("{:<28} {}", r.label, if r.passed { "pass" } else { "FAIL" });
                }
                println!("outputs in {}", out.output_dir.display());
                let failing = out.report.failing();
                if failing.is_empty() {
                    ExitCode::SUCCESS
                } else {
                    eprintln!("failing verifiers: {}", failing.join(", "));
                    ExitCode::from(1)
                }
            }
            Err(e @ RunError::Simulation(_)) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
