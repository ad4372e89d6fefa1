//! Front end for the protocol-step timing harness.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use sedauth::sim::bench::{bench_flows, BenchMode};

use crate::common::{config_err, io_err, parse_curve, CliError};

#[derive(Args)]
pub struct BenchArgs {
    /// Completed authentication + certification flows to time
    #[arg(long, default_value_t = 30)]
    runs: usize,

    /// Curve suite (p256 or toy17)
    #[arg(long, default_value = "p256")]
    curve: String,

    /// Seed for the flows' protocol randomness
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Where the messages travel: in-memory or tcp (loopback)
    #[arg(long, default_value = "in-memory")]
    mode: String,

    /// Also write the rows as CSV to this file
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

pub fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let algorithm = parse_curve(&args.curve)?;
    let mode = match args.mode.as_str() {
        "in-memory" | "memory" => BenchMode::InMemory,
        "tcp" => BenchMode::Tcp,
        other => return Err(config_err(format!("unknown --mode {other:?} (in-memory or tcp)"))),
    };

    let report = bench_flows(mode, algorithm, args.runs, args.seed)?;
    print!("{}", report.table());

    if let Some(path) = &args.out {
        fs::write(path, report.csv())
            .map_err(|e| io_err(&format!("cannot write {}", path.display()), e))?;
        println!("rows written to {}", path.display());
    }
    Ok(())
}
