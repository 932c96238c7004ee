use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use replab_cli::commands::{
    cmd_calibrate, cmd_lowerbound, cmd_run, cmd_sweep, LowerBoundOptions, RunOptions, SweepOptions,
};
use replab_cli::provenance::{json_with_provenance, write_atomic, Provenance, VERSION};
use replab_cli::verify::{run_verify, Mutation};
use replab_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "replab", version = VERSION, about = "Reputation protocol laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its transcript and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        /// Exit with code 3 if any solve hit the iteration cap.
        #[arg(long)]
        strict: bool,
        /// Write the final learner matrix X.
        #[arg(long)]
        dump_x: bool,
        /// Write the final probability matrix P.
        #[arg(long)]
        dump_p: bool,
    },
    /// Run every cell and seed of an experiment config; resumable.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        strict: bool,
    },
    /// Two-set partition experiment against the +-1 nature.
    Lowerbound {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check every invariant at fixed seeds and print a JSON report.
    Verify {
        /// Also write the report to DIR/verify.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inject a known fault to confirm the suite detects it.
        #[arg(long, value_enum, default_value = "none")]
        mutate: MutationArg,
    },
    /// Re-derive the frozen experiment constants.
    Calibrate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Tiny trial counts, for smoke testing only.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MutationArg {
    None,
    TauSign,
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("outputs serialize"));
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed_offset,
            strict,
            dump_x,
            dump_p,
        } => {
            let summary = cmd_run(&RunOptions {
                config,
                out,
                seed_offset,
                strict,
                dump_x,
                dump_p,
            })?;
            print_json(&summary.regret);
        }
        Command::Sweep {
            config,
            out,
            seed_offset,
            jobs,
            strict,
        } => {
            let report = cmd_sweep(&SweepOptions {
                config,
                out,
                seed_offset,
                jobs,
                strict,
            })?;
            eprintln!("{} units computed, {} resumed", report.computed, report.resumed);
            print_json(&report.trends);
        }
        Command::Lowerbound {
            config,
            out,
            seed_offset,
            jobs,
        } => {
            let report = cmd_lowerbound(&LowerBoundOptions {
                config,
                out,
                seed_offset,
                jobs,
            })?;
            print_json(&report.sizes);
        }
        Command::Verify { out, mutate } => {
            let mutation = match mutate {
                MutationArg::None => Mutation::None,
                MutationArg::TauSign => Mutation::TauSign,
            };
            let report = run_verify(mutation);
            print_json(&report);
            if let Some(dir) = out {
                let prov = Provenance::new("verify", &serde_json::json!({ "mutation": mutation }));
                write_atomic(&dir.join("verify.json"), &json_with_provenance(&prov, &report))?;
            }
            if !report.passed {
                let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
                return Err(CliError::Verification(failed.join(", ")));
            }
        }
        Command::Calibrate { out, jobs, quick } => {
            let cal = cmd_calibrate(&out, quick, jobs)?;
            print_json(&cal);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
