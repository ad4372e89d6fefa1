//! Shared plumbing: the exit-code error type, RNG construction, secret
//! file handling, and small argument parsers.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::rngs::SysRng;
use rand::{SeedableRng, TryRng};
use rand_chacha::ChaCha20Rng;
use sedauth::crypto;
use sedauth::ec::{algorithm_by_name, AlgorithmId};
use sedauth::error::ProtocolError;
use sedauth::roles::FAB_SECRET_LEN;

pub const EXIT_PROTOCOL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Anything a subcommand can fail with, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Protocol or authentication failure, or malformed protocol data.
    Protocol(String),
    /// Bad flags, bad arguments, refusal to clobber existing files.
    Config(String),
    /// The operating system said no.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Protocol(_) => EXIT_PROTOCOL,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Protocol(m) | CliError::Config(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            // Ledger storage problems are I/O, not protocol violations.
            ProtocolError::Storage(m) => CliError::Io(m),
            other => CliError::Protocol(other.to_string()),
        }
    }
}

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn io_err(context: &str, e: io::Error) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

/// A seeded stream when the caller wants reproducibility, OS entropy
/// otherwise.
pub fn make_rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => {
            let mut seed = [0u8; 32];
            SysRng
                .try_fill_bytes(&mut seed)
                .expect("operating system entropy source");
            ChaCha20Rng::from_seed(seed)
        }
    }
}

/// Seconds since the epoch, for certificate validity and freshness checks.
pub fn wall_clock() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn parse_curve(name: &str) -> Result<AlgorithmId, CliError> {
    algorithm_by_name(name)
        .ok_or_else(|| config_err(format!("unknown curve {name:?} (use p256 or toy17)")))
}

/// Writes one fabrication secret as a hex line, owner-readable only.
pub fn write_secret_file(path: &Path, secret: &[u8; FAB_SECRET_LEN]) -> Result<(), CliError> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut file = opts
        .open(path)
        .map_err(|e| io_err(&format!("cannot create {}", path.display()), e))?;
    file.write_all(format!("{}\n", hex::encode(secret)).as_bytes())
        .map_err(|e| io_err(&format!("cannot write {}", path.display()), e))?;
    Ok(())
}

/// Reads a fabrication secret file (hex, whitespace tolerated). Warns on
/// loose permissions rather than refusing: field units get copied around.
pub fn read_secret_file(path: &Path) -> Result<[u8; FAB_SECRET_LEN], CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| io_err(&format!("cannot read {}", path.display()), e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::MetadataExt;
        if let Ok(meta) = fs::metadata(path) {
            if meta.mode() & 0o077 != 0 {
                eprintln!(
                    "warning: {} is readable by other users (chmod 600 recommended)",
                    path.display()
                );
            }
        }
    }
    let raw = hex::decode(text.trim())
        .map_err(|e| config_err(format!("{} is not valid hex: {e}", path.display())))?;
    raw.as_slice().try_into().map_err(|_| {
        config_err(format!(
            "{} holds {} bytes; a fabrication secret is {FAB_SECRET_LEN}",
            path.display(),
            raw.len()
        ))
    })
}

/// Short, safe-to-print identifier for key material.
pub fn show_fingerprint(data: &[u8]) -> String {
    crypto::fingerprint(data)
}
