use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blockhf::autodiff::Fault;
use blockhf::config::parse_config;
use blockhf::experiment::run_experiment;
use blockhf::models::MODEL_PRESETS;
use blockhf::optimizer::PARTITION_PRESETS;
use blockhf::verify::{verify, Suite, VerifyOptions};
use blockhf::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(name = "blockhf", version, about = "Block-diagonal Hessian-free training and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its metrics CSV.
    Train { config: PathBuf },
    /// Run a self-check suite: autodiff, cg, optimizer or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt the tanh tangent rule; the suite is then expected to fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// List model and partition presets.
    Presets,
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(if err.is_numerical() { EXIT_NUMERICAL } else { EXIT_VALIDATION })
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Train { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(EXIT_VALIDATION);
                }
            };
            let cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match run_experiment(&cfg) {
                Ok(summary) => {
                    println!(
                        "{} updates{}; metrics written to {}",
                        summary.updates,
                        if summary.stopped_early { " (early stop)" } else { "" },
                        cfg.output.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify {
            suite,
            seed,
            inject_fault,
        } => {
            let suite: Suite = match suite.parse() {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let opts = VerifyOptions {
                seed,
                fault: inject_fault.then_some(Fault::TanhTangent),
            };
            match verify(suite, &opts) {
                Ok(report) => {
                    println!("{report}");
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_VERIFICATION)
                    }
                }
                // An abort inside a suite is itself a failed check.
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_VERIFICATION)
                }
            }
        }
        Command::Presets => {
            println!("models:");
            for (name, desc) in MODEL_PRESETS {
                println!("  {name:<20} {desc}");
            }
            println!("partitions:");
            for (name, desc) in PARTITION_PRESETS {
                println!("  {name:<20} {desc}");
            }
            ExitCode::SUCCESS
        }
    }
}
