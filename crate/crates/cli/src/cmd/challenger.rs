//! Reference challengers speaking the referee's external interfaces. They
//! write raw protocol output, never a run report.

use std::io::Write;
use std::net::TcpListener;
use std::process::ExitCode;
use std::time::Duration;

use bellkit::lhv::generate_table;
use bellkit::qrc::interactive::play_interactive;
use bellkit::qrc::probe::lhv_replay_outcomes;
use bellkit::qrc::three_node::{serve_lhv_source, serve_lhv_station};
use bellkit::qrc::{LineChannel, QrcError};
use bellkit::{LhvModel, RngSeed};
use clap::{Subcommand, ValueEnum};

use super::qrc::{native_strategy, NativeInteractive};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(subcommand)]
    which: Which,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Saturating,
    Uniform,
}

impl ModelArg {
    fn model(self) -> LhvModel {
        match self {
            ModelArg::Saturating => LhvModel::boundary_saturating(),
            ModelArg::Uniform => LhvModel::uniform(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Which {
    /// Print an `A,Ap,B,Bp` table for `--seed S --n N`.
    Spreadsheet {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ModelArg::Saturating)]
        model: ModelArg,
        /// Misbehave: seed from the wall clock.
        #[arg(long)]
        clock: bool,
        /// Misbehave: ignore `--seed` and use a fixed one.
        #[arg(long)]
        ignore_seed: bool,
        /// Misbehave: print this many rows fewer than asked.
        #[arg(long, default_value_t = 0)]
        drop_rows: usize,
    },
    /// Play interactive sessions on stdio, or on TCP with `--listen`.
    Interactive {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = NativeInteractive::Lhv)]
        strategy: NativeInteractive,
        /// Accept this many sessions on a TCP address instead of stdio.
        #[arg(long)]
        listen: Option<String>,
        #[arg(long, default_value_t = 1)]
        sessions: usize,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
    },
    /// Answer one replay with `a,b`.
    Replay {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        round: usize,
        #[arg(long)]
        x: u8,
        #[arg(long)]
        y: u8,
        /// Misbehave: flip A whenever Bob's setting is 1.
        #[arg(long)]
        signalling: bool,
    },
    /// Three-node source on stdio.
    Source {
        #[arg(long)]
        seed: u64,
    },
    /// Three-node station on stdio.
    Station {
        /// Accepted for symmetry with the source; unused.
        #[arg(long)]
        seed: Option<u64>,
        /// Misbehave: try to forward every k-th delivery.
        #[arg(long, default_value_t = 0)]
        collude_every: usize,
    },
}

fn fail(e: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn qrc_exit(r: Result<(), QrcError>) -> ExitCode {
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, e.exit_code() as u8),
    }
}

pub fn run(a: Args) -> ExitCode {
    match a.which {
        Which::Spreadsheet {
            seed,
            n,
            model,
            clock,
            ignore_seed,
            drop_rows,
        } => {
            let seed = if clock {
                let t = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_nanos() as u64)
                    .unwrap_or(0);
                RngSeed(t)
            } else if ignore_seed {
                RngSeed(0)
            } else {
                RngSeed(seed)
            };
            let rows = n.saturating_sub(drop_rows);
            let mut out = Vec::new();
            if rows == 0 {
                out.extend_from_slice(b"A,Ap,B,Bp\n");
            } else {
                match generate_table(&model.model(), rows, seed) {
                    Ok(t) => out = t.to_csv_bytes(),
                    Err(e) => return fail(e, 1),
                }
            }
            match std::io::stdout().lock().write_all(&out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e, 1),
            }
        }
        Which::Interactive {
            seed,
            strategy,
            listen,
            sessions,
            timeout_ms,
        } => {
            let timeout = Duration::from_millis(timeout_ms);
            let mut s = match native_strategy(strategy, RngSeed(seed)) {
                Ok(s) => s,
                Err(e) => return fail(e, 1),
            };
            match listen {
                None => {
                    let mut ch = LineChannel::new(std::io::stdin(), std::io::stdout(), "referee");
                    qrc_exit(play_interactive(&mut ch, s.as_mut(), timeout).map(|_| ()))
                }
                Some(addr) => {
                    let listener = match TcpListener::bind(&addr) {
                        Ok(l) => l,
                        Err(e) => return fail(format!("bind {addr}: {e}"), 3),
                    };
                    for _ in 0..sessions {
                        let stream = match listener.accept() {
                            Ok((s, _)) => s,
                            Err(e) => return fail(e, 3),
                        };
                        let mut ch = match LineChannel::from_tcp(stream, "referee") {
                            Ok(c) => c,
                            Err(e) => return fail(e, 3),
                        };
                        if let Err(e) = play_interactive(&mut ch, s.as_mut(), timeout) {
                            return fail(&e, e.exit_code() as u8);
                        }
                    }
                    ExitCode::SUCCESS
                }
            }
        }
        Which::Replay {
            seed,
            round,
            x,
            y,
            signalling,
        } => {
            if x > 1 || y > 1 {
                return fail("settings must be 0 or 1", 1);
            }
            let (a, b) =
                lhv_replay_outcomes(&LhvModel::boundary_saturating(), RngSeed(seed), round, x, y);
            let a = if signalling && y == 1 { -a } else { a };
            println!("{a},{b}");
            ExitCode::SUCCESS
        }
        Which::Source { seed } => {
            let mut ch = LineChannel::new(std::io::stdin(), std::io::stdout(), "mediator");
            qrc_exit(serve_lhv_source(
                &mut ch,
                &LhvModel::boundary_saturating(),
                RngSeed(seed),
            ))
        }
        Which::Station {
            seed: _,
            collude_every,
        } => {
            let mut ch = LineChannel::new(std::io::stdin(), std::io::stdout(), "mediator");
            qrc_exit(serve_lhv_station(&mut ch, collude_every))
        }
    }
}
