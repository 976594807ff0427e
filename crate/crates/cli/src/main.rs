use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmdesign_cli::{output, run, verify_result, RunConfig, RunOptions, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "mmdesign", version, about = "Minimax D-optimal designs for multi-response regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every case of a configuration and write the artifacts.
    Solve {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of cases solved concurrently.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        /// Re-certify a stored result.json instead of solving.
        #[arg(long, value_name = "RESULT")]
        verify_only: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Solve {
        config,
        out,
        workers,
        verify_only,
    } = cli.command;
    let cfg = match RunConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(result) = verify_only {
        return match verify_result(&cfg, &result) {
            Ok(v) => {
                println!(
                    "{}: max d {:.3e} (eta2 {}), |Δd| {:.1e}, Δloss {:.1e}: {}",
                    v.case,
                    v.certificate.max_violation,
                    v.certificate.eta2,
                    v.max_d_diff,
                    v.loss_diff,
                    if v.pass() { "ok" } else { "FAILED" }
                );
                ExitCode::from(if v.pass() { 0 } else { 1 })
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }
    let opts = RunOptions {
        out_dir: out,
        workers,
        dry: false,
    };
    match run(&cfg, &opts) {
        Ok(report) => {
            print!("{}", output::summary_text(&report));
            println!("artifacts in {}", report.out_dir.display());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
