//! Decode artifacts for operators: certificates (binary or hex text) and
//! ledger files. Secret bytes never reach stdout — the ledger's own
//! describe() output is already redacted to fingerprints.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use sedauth::cert::{Certificate, POINT_OFFSET};
use sedauth::ec::{algorithm_name, curve_for};
use sedauth::error::CertError;
use sedauth::roles::SedLedger;

use crate::common::{config_err, io_err, CliError};

#[derive(Args)]
pub struct InspectArgs {
    /// Certificate file (binary or hex text) or ledger file
    #[arg(value_name = "FILE")]
    path: PathBuf,

    /// What the file is: cert, ledger, or auto (try both)
    #[arg(long, default_value = "auto")]
    kind: String,
}

pub fn cmd_inspect(args: InspectArgs) -> Result<(), CliError> {
    let raw = fs::read(&args.path)
        .map_err(|e| io_err(&format!("cannot read {}", args.path.display()), e))?;

    match args.kind.as_str() {
        "cert" => inspect_cert(&raw),
        "ledger" => inspect_ledger(&args),
        "auto" => {
            // Certificates are a single fixed-layout blob; if the bytes
            // decode as one, that is what the file is. Otherwise try the
            // ledger framing and report the certificate diagnosis only if
            // both fail.
            let cert_failure = match inspect_cert(&raw) {
                Ok(()) => return Ok(()),
                Err(e) => e,
            };
            match inspect_ledger(&args) {
                Ok(()) => Ok(()),
                Err(ledger_failure) => Err(CliError::Protocol(format!(
                    "{} is neither a certificate ({}) nor a ledger ({})",
                    args.path.display(),
                    cert_failure,
                    ledger_failure
                ))),
            }
        }
        other => Err(config_err(format!(
            "unknown --kind {other:?} (cert, ledger, or auto)"
        ))),
    }
}

/// Accepts raw certificate bytes, or the same as a hex text file.
fn inspect_cert(raw: &[u8]) -> Result<(), CliError> {
    let bytes: Vec<u8> = match std::str::from_utf8(raw) {
        Ok(text) if looks_like_hex(text) => hex::decode(text.trim())
            .map_err(|e| CliError::Protocol(format!("invalid hex: {e}")))?,
        _ => raw.to_vec(),
    };

    let cert = Certificate::decode(&bytes).map_err(|e| {
        CliError::Protocol(format!(
            "certificate parse error at byte {}: {e}",
            cert_error_offset(&bytes, &e)
        ))
    })?;

    let curve = curve_for(cert.meta.algorithm_id).expect("decoded certs have a known curve");
    println!(
        "implicit certificate ({} bytes, curve {})",
        bytes.len(),
        algorithm_name(cert.meta.algorithm_id)
    );
    println!("  session   {}", cert.session_id);
    println!("  issuer    {}", cert.meta.issuer_id);
    println!("  subject   {}", cert.meta.subject_id);
    println!(
        "  validity  [{}, {})",
        cert.meta.valid_from, cert.meta.valid_to
    );
    println!(
        "  point     {}",
        hex::encode(curve.point_to_bytes(&cert.reconstruction_point))
    );
    Ok(())
}

fn looks_like_hex(text: &str) -> bool {
    let trimmed = text.trim();
    !trimmed.is_empty() && trimmed.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Best-effort byte offset for each failure mode of the fixed layout.
fn cert_error_offset(bytes: &[u8], e: &CertError) -> usize {
    match e {
        CertError::UnknownVersion => 0,
        CertError::UnknownAlgorithm => 1,
        CertError::InvalidValidity => POINT_OFFSET - 16,
        CertError::PointEncoding | CertError::OffCurvePoint => POINT_OFFSET,
        CertError::TrailingGarbage => expected_cert_len(bytes).unwrap_or(bytes.len()),
        CertError::LengthMismatch => bytes.len(),
    }
}

fn expected_cert_len(bytes: &[u8]) -> Option<usize> {
    let curve = curve_for(sedauth::ec::AlgorithmId(*bytes.get(1)?))?;
    let width = match bytes.get(POINT_OFFSET)? {
        0x00 => 1,
        0x04 => curve.point_encoding_len(),
        _ => return None,
    };
    Some(POINT_OFFSET + width)
}

/// One line per state transition, replayed from the file.
fn inspect_ledger(args: &InspectArgs) -> Result<(), CliError> {
    let ledger = SedLedger::load(&args.path).map_err(|e| match e.kind() {
        // Corrupt contents are a data problem (the load error already
        // names the byte offset); anything else is the filesystem's fault.
        std::io::ErrorKind::InvalidData => CliError::Protocol(e.to_string()),
        _ => io_err(&format!("cannot read {}", args.path.display()), e),
    })?;
    println!(
        "ledger {} ({} records)",
        args.path.display(),
        ledger.records().len()
    );
    for (index, record) in ledger.records().iter().enumerate() {
        println!("  {index:>4}  {}", record.describe());
    }
    Ok(())
}
