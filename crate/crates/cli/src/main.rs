//! `sloloop` command-line runner.

mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use env_logger::Env;

use sloloop::descriptor::{parse_descriptor, validate_remediation};

#[derive(Parser)]
#[command(name = "sloloop", version, about = "SLO-driven feedback loop over a simulated video pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, optionally under closed-loop control.
    Run {
        #[arg(long)]
        descriptor: Option<PathBuf>,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::ClosedLoop)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        /// Replace the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Derive figure-ready CSV from a finished run directory.
    Plotdata {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        figure: plot::Figure,
    },
    /// Parse a descriptor and report remediation gaps.
    Validate {
        #[arg(long)]
        descriptor: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    OpenLoop,
    ClosedLoop,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("SLOLOOP_LOG", "warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            descriptor,
            scenario,
            mode,
            out,
            seed,
        } => {
            let cfg = run::RunConfig {
                descriptor,
                scenario,
                mode,
                out,
                seed,
            };
            match run::cmd_run(&cfg) {
                Ok(outcome) if outcome.unresolved => ExitCode::from(2),
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Plotdata { run, figure } => {
            let stdout = std::io::stdout();
            match plot::cmd_plotdata(&run, figure, stdout.lock()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Validate { descriptor } => cmd_validate(&descriptor),
    }
}

fn fail(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    ExitCode::from(1)
}

fn cmd_validate(path: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(anyhow::anyhow!("{}: {e}", path.display())),
    };
    match parse_descriptor(&text) {
        Ok(d) => {
            println!(
                "ok: {} components, {} metrics, {} SLOs, {} actions",
                d.components.len(),
                d.metrics.len(),
                d.slos.len(),
                d.actions.len()
            );
            for w in validate_remediation(&d) {
                println!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(anyhow::anyhow!("{}: {e}", path.display())),
    }
}
