//! `bellkit`: finite-sample CHSH experiments from the command line.

mod cmd;
mod report;

use std::process::ExitCode;

use bellkit::qrc::QrcError;
use clap::{Parser, Subcommand};

use report::{emit, Format};

#[derive(Debug, Parser)]
#[command(
    name = "bellkit",
    version,
    about = "Finite-sample Bell/CHSH experiments, bounds and challenge referee"
)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a quantum, local or cheating source and report CHSH.
    Simulate(cmd::simulate::Args),
    /// Evaluate tail bounds and efficiency-adjusted limits.
    Bound(cmd::bound::Args),
    /// Pair a timed event stream and report naive and adjusted verdicts.
    Analyze(cmd::analyze::Args),
    /// Classify 2×2×2 behaviors against the local polytope.
    Polytope(cmd::polytope::Args),
    /// Referee challenge sessions against a challenger.
    Qrc(cmd::qrc::Args),
    /// Evidence for the at-most-one-half conjecture.
    Conjecture(cmd::conjecture::Args),
    /// Native reference challengers, runnable as referee subprocesses.
    Challenger(cmd::challenger::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd::simulate::run(a),
        Command::Bound(a) => cmd::bound::run(a),
        Command::Analyze(a) => cmd::analyze::run(a),
        Command::Polytope(a) => cmd::polytope::run(a),
        Command::Qrc(a) => cmd::qrc::run(a),
        Command::Conjecture(a) => cmd::conjecture::run(a),
        Command::Challenger(a) => return cmd::challenger::run(a),
    };
    match result {
        Ok(out) => {
            if let Err(e) = emit(&out, cli.format) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            ExitCode::from(out.exit as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<QrcError>()
                .map(QrcError::exit_code)
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
