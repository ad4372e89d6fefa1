//! Append-only persistence for the authenticator's device ledger.
//!
//! The file is a sequence of records, each framed as
//! `record_type (1) ‖ body_len (4, BE) ‖ body`. State is never rewritten:
//! every transition appends, and loading replays the file from the top.
//! The first record is always [`LedgerRecord::CaIdentity`].
//!
//! The file contains key material (the CA private scalar and device
//! fabrication secrets), so the CLI creates it with owner-only
//! permissions and the `Debug`/describe output here never prints secret
//! bytes.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::cert::Certificate;
use crate::crypto::{fingerprint, Nonce, NONCE_LEN};
use crate::ec::AlgorithmId;
use crate::ids::{DeviceId, SessionId};
use crate::roles::{DeviceStatus, Role, FAB_SECRET_LEN};

/// One state transition of the authenticator.
#[derive(Clone, PartialEq, Eq)]
pub enum LedgerRecord {
    /// The authenticator's own identity: curve, device id, CA private key.
    CaIdentity {
        algorithm_id: AlgorithmId,
        sed_id: DeviceId,
        ca_private: Vec<u8>,
    },
    /// A device was registered with its fabrication secret.
    Provisioned {
        device_id: DeviceId,
        role: Role,
        fab_secret: [u8; FAB_SECRET_LEN],
    },
    /// A completed authentication cycle advanced the device's key epoch;
    /// the nonce is the ratchet salt, so the full key chain can be
    /// recomputed from the fabrication secret plus these records.
    Ratcheted { device_id: DeviceId, nonce: Nonce },
    /// The device was handed a new session id.
    SessionAssigned {
        device_id: DeviceId,
        session_id: SessionId,
    },
    /// The device's standing changed.
    StatusChanged {
        device_id: DeviceId,
        status: DeviceStatus,
    },
    /// A certificate became the device's current one.
    CertIssued {
        device_id: DeviceId,
        cert_bytes: Vec<u8>,
    },
    /// The device's current certificate stopped being current.
    CertSuperseded { device_id: DeviceId },
}

const TYPE_CA_IDENTITY: u8 = 1;
const TYPE_PROVISIONED: u8 = 2;
const TYPE_RATCHETED: u8 = 3;
const TYPE_SESSION_ASSIGNED: u8 = 4;
const TYPE_STATUS_CHANGED: u8 = 5;
const TYPE_CERT_ISSUED: u8 = 6;
const TYPE_CERT_SUPERSEDED: u8 = 7;

/// Guard against absurd body lengths from corrupt files.
const MAX_BODY_LEN: usize = 4096;

impl LedgerRecord {
    fn type_code(&self) -> u8 {
        match self {
            LedgerRecord::CaIdentity { .. } => TYPE_CA_IDENTITY,
            LedgerRecord::Provisioned { .. } => TYPE_PROVISIONED,
            LedgerRecord::Ratcheted { .. } => TYPE_RATCHETED,
            LedgerRecord::SessionAssigned { .. } => TYPE_SESSION_ASSIGNED,
            LedgerRecord::StatusChanged { .. } => TYPE_STATUS_CHANGED,
            LedgerRecord::CertIssued { .. } => TYPE_CERT_ISSUED,
            LedgerRecord::CertSuperseded { .. } => TYPE_CERT_SUPERSEDED,
        }
    }

    fn encode_body(&self) -> Vec<u8> {
        match self {
            LedgerRecord::CaIdentity {
                algorithm_id,
                sed_id,
                ca_private,
            } => {
                let mut b = vec![algorithm_id.0];
                b.extend_from_slice(sed_id.as_bytes());
                b.extend_from_slice(ca_private);
                b
            }
            LedgerRecord::Provisioned {
                device_id,
                role,
                fab_secret,
            } => {
                let mut b = device_id.as_bytes().to_vec();
                b.push(role.code());
                b.extend_from_slice(fab_secret);
                b
            }
            LedgerRecord::Ratcheted { device_id, nonce } => {
                let mut b = device_id.as_bytes().to_vec();
                b.extend_from_slice(nonce);
                b
            }
            LedgerRecord::SessionAssigned {
                device_id,
                session_id,
            } => {
                let mut b = device_id.as_bytes().to_vec();
                b.extend_from_slice(session_id.as_bytes());
                b
            }
            LedgerRecord::StatusChanged { device_id, status } => {
                let mut b = device_id.as_bytes().to_vec();
                b.push(status.code());
                b
            }
            LedgerRecord::CertIssued {
                device_id,
                cert_bytes,
            } => {
                let mut b = device_id.as_bytes().to_vec();
                b.extend_from_slice(cert_bytes);
                b
            }
            LedgerRecord::CertSuperseded { device_id } => device_id.as_bytes().to_vec(),
        }
    }

    fn decode(type_code: u8, body: &[u8]) -> Result<Self, String> {
        let device_at = |at: usize| -> Result<DeviceId, String> {
            let bytes: [u8; 8] = body
                .get(at..at + 8)
                .and_then(|s| s.try_into().ok())
                .ok_or_else(|| "truncated device id".to_string())?;
            Ok(DeviceId(bytes))
        };
        match type_code {
            TYPE_CA_IDENTITY => {
                if body.len() < 1 + 8 + 1 {
                    return Err("CA identity record too short".into());
                }
                let algorithm_id = AlgorithmId(body[0]);
                let mut sed = [0u8; 8];
                sed.copy_from_slice(&body[1..9]);
                Ok(LedgerRecord::CaIdentity {
                    algorithm_id,
                    sed_id: DeviceId(sed),
                    ca_private: body[9..].to_vec(),
                })
            }
            TYPE_PROVISIONED => {
                if body.len() != 8 + 1 + FAB_SECRET_LEN {
                    return Err("provision record has wrong length".into());
                }
                let role = Role::from_code(body[8])
                    .ok_or_else(|| format!("unknown role code {}", body[8]))?;
                let mut secret = [0u8; FAB_SECRET_LEN];
                secret.copy_from_slice(&body[9..]);
                Ok(LedgerRecord::Provisioned {
                    device_id: device_at(0)?,
                    role,
                    fab_secret: secret,
                })
            }
            TYPE_RATCHETED => {
                if body.len() != 8 + NONCE_LEN {
                    return Err("ratchet record has wrong length".into());
                }
                let mut nonce = [0u8; NONCE_LEN];
                nonce.copy_from_slice(&body[8..]);
                Ok(LedgerRecord::Ratcheted {
                    device_id: device_at(0)?,
                    nonce,
                })
            }
            TYPE_SESSION_ASSIGNED => {
                if body.len() != 8 + SessionId::LEN {
                    return Err("session record has wrong length".into());
                }
                let mut session = [0u8; SessionId::LEN];
                session.copy_from_slice(&body[8..]);
                Ok(LedgerRecord::SessionAssigned {
                    device_id: device_at(0)?,
                    session_id: SessionId(session),
                })
            }
            TYPE_STATUS_CHANGED => {
                if body.len() != 9 {
                    return Err("status record has wrong length".into());
                }
                let status = DeviceStatus::from_code(body[8])
                    .ok_or_else(|| format!("unknown status code {}", body[8]))?;
                Ok(LedgerRecord::StatusChanged {
                    device_id: device_at(0)?,
                    status,
                })
            }
            TYPE_CERT_ISSUED => {
                if body.len() <= 8 {
                    return Err("certificate record too short".into());
                }
                Ok(LedgerRecord::CertIssued {
                    device_id: device_at(0)?,
                    cert_bytes: body[8..].to_vec(),
                })
            }
            TYPE_CERT_SUPERSEDED => {
                if body.len() != 8 {
                    return Err("supersede record has wrong length".into());
                }
                Ok(LedgerRecord::CertSuperseded {
                    device_id: device_at(0)?,
                })
            }
            other => Err(format!("unknown record type {other}")),
        }
    }

    /// Operator-facing one-liner; never includes secret bytes.
    pub fn describe(&self) -> String {
        match self {
            LedgerRecord::CaIdentity {
                algorithm_id,
                sed_id,
                ca_private,
            } => format!(
                "ca-identity sed={sed_id} algorithm={:#04x} key-fingerprint={}",
                algorithm_id.0,
                fingerprint(ca_private)
            ),
            LedgerRecord::Provisioned {
                device_id,
                role,
                fab_secret,
            } => format!(
                "provisioned device={device_id} role={role} secret-fingerprint={}",
                fingerprint(fab_secret)
            ),
            LedgerRecord::Ratcheted { device_id, nonce } => {
                format!("ratcheted device={device_id} nonce={}", hex::encode(nonce))
            }
            LedgerRecord::SessionAssigned {
                device_id,
                session_id,
            } => format!("session-assigned device={device_id} session={session_id}"),
            LedgerRecord::StatusChanged { device_id, status } => {
                format!("status-changed device={device_id} status={status}")
            }
            LedgerRecord::CertIssued {
                device_id,
                cert_bytes,
            } => {
                let window = Certificate::decode(cert_bytes)
                    .map(|c| format!(" valid={}..{}", c.meta.valid_from, c.meta.valid_to))
                    .unwrap_or_default();
                format!(
                    "cert-issued device={device_id} bytes={} hash={}{window}",
                    cert_bytes.len(),
                    fingerprint(cert_bytes)
                )
            }
            LedgerRecord::CertSuperseded { device_id } => {
                format!("cert-superseded device={device_id}")
            }
        }
    }
}

impl std::fmt::Debug for LedgerRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.describe())
    }
}

/// The record log, optionally mirrored to a file as it grows.
// Record `Debug` output is already redacted, so deriving here is safe.
#[derive(Debug)]
pub struct SedLedger {
    path: Option<PathBuf>,
    records: Vec<LedgerRecord>,
}

impl SedLedger {
    /// A ledger that lives only in memory (tests, simulations).
    pub fn in_memory() -> Self {
        SedLedger {
            path: None,
            records: Vec::new(),
        }
    }

    /// Creates a fresh ledger file, owner-readable only (it will hold the
    /// CA key and fabrication secrets). Refuses to clobber an existing one.
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut opts = OpenOptions::new();
        opts.write(true).create_new(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        opts.open(path)?;
        Ok(SedLedger {
            path: Some(path.to_path_buf()),
            records: Vec::new(),
        })
    }

    /// Loads and strictly parses an existing ledger file. Errors name the
    /// byte offset of the first malformed record.
    pub fn load(path: &Path) -> io::Result<Self> {
        let mut file = File::open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut records = Vec::new();
        let mut at = 0usize;
        while at < bytes.len() {
            let corrupt = |why: String| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("ledger corrupt at byte {at}: {why}"),
                )
            };
            if bytes.len() - at < 5 {
                return Err(corrupt("truncated record header".into()));
            }
            let type_code = bytes[at];
            let body_len = u32::from_be_bytes(
                bytes[at + 1..at + 5].try_into().expect("4-byte slice"),
            ) as usize;
            if body_len > MAX_BODY_LEN {
                return Err(corrupt(format!("record body of {body_len} bytes")));
            }
            if bytes.len() - at - 5 < body_len {
                return Err(corrupt("truncated record body".into()));
            }
            let body = &bytes[at + 5..at + 5 + body_len];
            let record = LedgerRecord::decode(type_code, body).map_err(corrupt)?;
            records.push(record);
            at += 5 + body_len;
        }
        Ok(SedLedger {
            path: Some(path.to_path_buf()),
            records,
        })
    }

    /// Appends one record, writing it through to the file if persistent.
    pub fn append(&mut self, record: LedgerRecord) -> io::Result<()> {
        if let Some(path) = &self.path {
            let body = record.encode_body();
            let mut framed = Vec::with_capacity(5 + body.len());
            framed.push(record.type_code());
            framed.extend_from_slice(&(body.len() as u32).to_be_bytes());
            framed.extend_from_slice(&body);
            let mut file = OpenOptions::new().append(true).open(path)?;
            file.write_all(&framed)?;
            file.sync_data()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<LedgerRecord> {
        let device = DeviceId(*b"bms-0001");
        vec![
            LedgerRecord::CaIdentity {
                algorithm_id: AlgorithmId(0xF0),
                sed_id: DeviceId(*b"sed-0001"),
                ca_private: vec![0x07],
            },
            LedgerRecord::Provisioned {
                device_id: device,
                role: Role::Bms,
                fab_secret: [9; FAB_SECRET_LEN],
            },
            LedgerRecord::Ratcheted {
                device_id: device,
                nonce: [3; 16],
            },
            LedgerRecord::SessionAssigned {
                device_id: device,
                session_id: SessionId([4; 16]),
            },
            LedgerRecord::StatusChanged {
                device_id: device,
                status: DeviceStatus::Authenticated,
            },
            LedgerRecord::CertIssued {
                device_id: device,
                cert_bytes: vec![1, 2, 3, 4],
            },
            LedgerRecord::CertSuperseded { device_id: device },
        ]
    }

    #[test]
    fn records_roundtrip_through_the_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.bin");
        let mut ledger = SedLedger::create(&path).unwrap();
        for r in sample_records() {
            ledger.append(r).unwrap();
        }
        let reloaded = SedLedger::load(&path).unwrap();
        assert_eq!(reloaded.records(), ledger.records());
    }

    #[test]
    fn create_refuses_to_clobber() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.bin");
        SedLedger::create(&path).unwrap();
        assert!(SedLedger::create(&path).is_err());
    }

    #[test]
    fn corruption_is_reported_with_a_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.bin");
        let mut ledger = SedLedger::create(&path).unwrap();
        for r in sample_records() {
            ledger.append(r).unwrap();
        }
        let mut bytes = std::fs::read(&path).unwrap();

        // Flip the type code of the second record into the unknown range.
        let second_at = 5 + ledger.records()[0].encode_body().len();
        bytes[second_at] = 0x7F;
        let broken = dir.path().join("broken.bin");
        std::fs::write(&broken, &bytes).unwrap();
        let err = SedLedger::load(&broken).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidData);
        assert!(
            err.to_string().contains(&format!("byte {second_at}")),
            "missing offset in: {err}"
        );

        // Truncate mid-record.
        let clipped = dir.path().join("clipped.bin");
        let good = std::fs::read(&path).unwrap();
        std::fs::write(&clipped, &good[..good.len() - 1]).unwrap();
        assert!(SedLedger::load(&clipped).is_err());
    }

    #[test]
    fn in_memory_ledger_appends_without_io() {
        let mut ledger = SedLedger::in_memory();
        for r in sample_records() {
            ledger.append(r).unwrap();
        }
        assert_eq!(ledger.records().len(), 7);
        assert!(ledger.path().is_none());
    }

    #[test]
    fn descriptions_never_contain_secret_bytes() {
        for r in sample_records() {
            let text = r.describe();
            assert!(!text.contains(&hex::encode([9u8; FAB_SECRET_LEN])));
            assert!(!text.contains("ca_private"));
            // Fingerprints are allowed; raw 32-byte hex is not.
            assert!(text.len() < 200, "{text}");
        }
    }
}
