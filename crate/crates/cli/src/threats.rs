//! Front end for the adversarial scenario suite. Exit status is the
//! verdict: zero only if every scenario's defense held.

use clap::Args;
use sedauth::sim::threats::{run_threat_suite, suite_table};

use crate::common::{parse_curve, CliError, EXIT_PROTOCOL};

#[derive(Args)]
pub struct ThreatsArgs {
    /// Deterministic seed for the whole suite
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Curve suite (p256 or toy17)
    #[arg(long, default_value = "p256")]
    curve: String,

    /// Run with ratcheting disabled — demonstrates the residual risk of a
    /// stolen pre-ratchet key (one scenario is expected to fail)
    #[arg(long)]
    no_ratchet: bool,
}

pub fn cmd_threats(args: ThreatsArgs) -> Result<(), CliError> {
    let algorithm = parse_curve(&args.curve)?;
    let reports = run_threat_suite(algorithm, !args.no_ratchet, args.seed)
        .map_err(|e| CliError::Protocol(format!("scenario suite failed to run: {e}")))?;

    print!("{}", suite_table(&reports));

    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.id)
        .collect();
    if failed.is_empty() {
        println!("{}/{} scenarios hold", reports.len(), reports.len());
        Ok(())
    } else {
        println!(
            "{}/{} scenarios hold; defense broke in: {}",
            reports.len() - failed.len(),
            reports.len(),
            failed.join(", ")
        );
        // Not a usage problem and not an I/O problem: the protocol lost.
        std::process::exit(EXIT_PROTOCOL);
    }
}
