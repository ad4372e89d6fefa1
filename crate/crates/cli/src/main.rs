//! `sedauth` — operate the closed-network authentication system from the
//! command line.
//!
//! One binary, five subcommands:
//!
//! * `provision` — fabricate device secrets and seed the authenticator
//!   ledger (the once-per-device manufacturing step).
//! * `run` — run a live node over TCP: the SED authenticator, or a
//!   BMS / control-unit device that authenticates, gets certified, and
//!   (between certified peers) establishes a session.
//! * `inspect` — decode a certificate or ledger file, secrets redacted.
//! * `threats` — execute the deterministic adversarial scenario suite.
//! * `bench` — time each protocol step over repeated runs.
//!
//! Exit codes: `0` success, `2` protocol or authentication failure,
//! `3` configuration error, `4` I/O error.

mod bench;
mod common;
mod inspect;
mod provision;
mod run;
mod threats;

use clap::{Parser, Subcommand};

use common::EXIT_CONFIG;

#[derive(Parser)]
#[command(
    name = "sedauth",
    version,
    about = "Lightweight device authentication for closed industrial networks",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fabricate device secrets and seed the authenticator ledger
    Provision(provision::ProvisionArgs),
    /// Run a node (SED authenticator, BMS, or control unit) over TCP
    Run(run::RunArgs),
    /// Decode a certificate or ledger file (secrets redacted)
    Inspect(inspect::InspectArgs),
    /// Run the adversarial scenario suite
    Threats(threats::ThreatsArgs),
    /// Time the protocol steps over repeated flows
    Bench(bench::BenchArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; those are successes.
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = match cli.command {
        Command::Provision(args) => provision::cmd_provision(args),
        Command::Run(args) => run::cmd_run(args),
        Command::Inspect(args) => inspect::cmd_inspect(args),
        Command::Threats(args) => threats::cmd_threats(args),
        Command::Bench(args) => bench::cmd_bench(args),
    };

    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
