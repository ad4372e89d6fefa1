//! Protocol state machines for the three node roles.
//!
//! * [`sed::Sed`] — the Secure Edge Device: the network's authenticator
//!   and certificate authority. It holds the device ledger, answers
//!   authentication requests with challenges, drives the key ratchet, and
//!   issues implicit certificates.
//! * [`device::Device`] — a supplicant (battery management system or
//!   control unit): authenticates to the SED with its fabrication secret,
//!   ratchets its keys in step, and enrolls for a certificate.
//! * [`session::SessionContext`] — peer-to-peer session establishment
//!   between two certified devices, with the SED offline.
//!
//! Every handler consumes one parsed protocol message and returns the
//! frames to send back. An error means the message was rejected and
//! nothing is sent — callers decide whether to log, drop the connection,
//! or record the outcome.

pub mod device;
pub mod ledger;
pub mod sed;
pub mod session;

pub use device::Device;
pub use ledger::{LedgerRecord, SedLedger};
pub use sed::{DeviceEntry, Sed};
pub use session::{establish_session, SessionContext};

use zeroize::Zeroize;

use crate::crypto;
use crate::ec::Point;
use crate::ecqv::KeyPair;
use crate::cert::Certificate;
use crate::ids::DeviceId;

/// Length of a fabrication secret installed at provisioning time.
pub const FAB_SECRET_LEN: usize = 32;

/// How long an issued certificate stays valid, in seconds (30 days).
pub const DEFAULT_CERT_VALIDITY_SECS: u64 = 30 * 24 * 60 * 60;

/// Node roles on the closed network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Authenticator and certificate authority.
    Sed,
    /// Battery management system (supplicant).
    Bms,
    /// Ad-hoc control unit (supplicant, session peer).
    ControlUnit,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Sed => "sed",
            Role::Bms => "bms",
            Role::ControlUnit => "control-unit",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Role::Sed => 0,
            Role::Bms => 1,
            Role::ControlUnit => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Role::Sed),
            1 => Some(Role::Bms),
            2 => Some(Role::ControlUnit),
            _ => None,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sed" => Ok(Role::Sed),
            "bms" => Ok(Role::Bms),
            "control-unit" | "cu" => Ok(Role::ControlUnit),
            other => Err(format!(
                "unknown role {other:?} (expected sed, bms, or control-unit)"
            )),
        }
    }
}

/// Where a device stands in the authenticator's ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceStatus {
    /// Provisioned but not (currently) authenticated.
    Unauthenticated,
    /// Passed challenge–response authentication this epoch.
    Authenticated,
    /// Holds a current implicit certificate.
    Certified,
    /// Barred from the network; all messages rejected.
    Revoked,
}

impl DeviceStatus {
    pub fn name(self) -> &'static str {
        match self {
            DeviceStatus::Unauthenticated => "unauthenticated",
            DeviceStatus::Authenticated => "authenticated",
            DeviceStatus::Certified => "certified",
            DeviceStatus::Revoked => "revoked",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DeviceStatus::Unauthenticated => 0,
            DeviceStatus::Authenticated => 1,
            DeviceStatus::Certified => 2,
            DeviceStatus::Revoked => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DeviceStatus::Unauthenticated),
            1 => Some(DeviceStatus::Authenticated),
            2 => Some(DeviceStatus::Certified),
            3 => Some(DeviceStatus::Revoked),
            _ => None,
        }
    }
}

impl std::fmt::Display for DeviceStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Why the authenticator is asking a device to re-certify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecertifyTrigger {
    /// Network or device configuration changed; the device must redo full
    /// authentication before it can be certified again.
    ConfigChange,
    /// New firmware: identity keys are intact, only the certificate turns.
    FirmwareUpdate,
    /// The current certificate ran out.
    Expiry,
    /// Scheduled re-enrollment after a restart.
    Startup,
}

/// A device's provisioning-time identity: its id, role, and the
/// fabrication secret shared with the authenticator.
pub struct DeviceIdentity {
    pub device_id: DeviceId,
    pub role: Role,
    fab_secret: [u8; FAB_SECRET_LEN],
}

impl DeviceIdentity {
    /// An all-zero secret is the classic "never provisioned" pattern and
    /// is refused outright.
    pub fn new(
        device_id: DeviceId,
        role: Role,
        fab_secret: [u8; FAB_SECRET_LEN],
    ) -> Result<Self, &'static str> {
        if fab_secret.iter().all(|b| *b == 0) {
            return Err("fabrication secret must not be all zero");
        }
        Ok(DeviceIdentity {
            device_id,
            role,
            fab_secret,
        })
    }

    pub(crate) fn fab_secret(&self) -> &[u8; FAB_SECRET_LEN] {
        &self.fab_secret
    }

    /// Short hash of the secret for operator-facing output.
    pub fn secret_fingerprint(&self) -> String {
        crypto::fingerprint(&self.fab_secret)
    }
}

impl Drop for DeviceIdentity {
    fn drop(&mut self) {
        self.fab_secret.zeroize();
    }
}

impl std::fmt::Debug for DeviceIdentity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeviceIdentity")
            .field("device_id", &self.device_id)
            .field("role", &self.role)
            .field("fab_secret", &self.secret_fingerprint())
            .finish()
    }
}

/// Everything a certified device needs to establish peer sessions:
/// its certificate, the key pair reconstructed from it, and the CA public
/// key for validating peers.
pub struct Credential {
    pub device_id: DeviceId,
    pub certificate: Certificate,
    pub keys: KeyPair,
    pub ca_public: Point,
}

impl std::fmt::Debug for Credential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credential")
            .field("device_id", &self.device_id)
            .field("certificate", &self.certificate)
            .finish_non_exhaustive()
    }
}
