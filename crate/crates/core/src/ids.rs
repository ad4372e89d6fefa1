//! Device and session identifiers shared by certificates, wire frames, and
//! the role state machines.

use rand::TryCryptoRng;

use crate::crypto;
use crate::error::CryptoError;

/// 8-byte device identifier, unique within one deployment.
///
/// Human-facing forms: up to 8 ASCII characters (NUL-padded on the right),
/// or exactly 16 hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceId(pub [u8; 8]);

impl DeviceId {
    pub const LEN: usize = 8;

    /// Parses either a 16-hex-digit form or a short ASCII name.
    pub fn parse(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("device id must not be empty".into());
        }
        if s.len() == 16 {
            if let Ok(raw) = hex::decode(s) {
                return Ok(DeviceId(raw.try_into().expect("16 hex digits is 8 bytes")));
            }
        }
        if s.len() <= 8 && s.bytes().all(|b| b.is_ascii_graphic()) {
            let mut id = [0u8; 8];
            id[..s.len()].copy_from_slice(s.as_bytes());
            return Ok(DeviceId(id));
        }
        Err(format!(
            "device id {s:?} must be at most 8 printable ASCII characters or 16 hex digits"
        ))
    }

    pub fn as_bytes(&self) -> &[u8; 8] {
        &self.0
    }
}

impl std::fmt::Display for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Prefer the readable ASCII form when the id is one.
        let trimmed: Vec<u8> = self.0.iter().copied().take_while(|&b| b != 0).collect();
        if !trimmed.is_empty()
            && trimmed.iter().all(|b| b.is_ascii_graphic())
            && self.0[trimmed.len()..].iter().all(|&b| b == 0)
        {
            write!(f, "{}", String::from_utf8_lossy(&trimmed))
        } else {
            write!(f, "{}", hex::encode(self.0))
        }
    }
}

impl std::fmt::Debug for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DeviceId({self})")
    }
}

/// 16-byte session identifier, freshly drawn per device authentication and
/// unique per device in an authenticator's ledger. The all-zero value marks
/// "not yet assigned" in frame headers.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(pub [u8; 16]);

impl SessionId {
    pub const LEN: usize = 16;
    pub const ZERO: SessionId = SessionId([0u8; 16]);

    pub fn random<R: TryCryptoRng + ?Sized>(rng: &mut R) -> Result<Self, CryptoError> {
        let mut id = [0u8; 16];
        crypto::fill_random(rng, &mut id)?;
        Ok(SessionId(id))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 16]
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

impl std::fmt::Debug for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SessionId({})", hex::encode(&self.0[..4]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn device_id_parses_ascii_and_hex() {
        let a = DeviceId::parse("bms-1").unwrap();
        assert_eq!(&a.0[..5], b"bms-1");
        assert_eq!(a.0[5..], [0, 0, 0]);
        assert_eq!(a.to_string(), "bms-1");

        let h = DeviceId::parse("0102030405060708").unwrap();
        assert_eq!(h.0, [1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(h.to_string(), "0102030405060708");

        assert!(DeviceId::parse("").is_err());
        assert!(DeviceId::parse("way-too-long-name").is_err());
        assert!(DeviceId::parse("has space").is_err());
    }

    #[test]
    fn session_id_zero_marker() {
        assert!(SessionId::ZERO.is_zero());
        let mut rng = rand::rng();
        let s = SessionId::random(&mut rng).unwrap();
        assert!(!s.is_zero(), "random session id collided with zero");
    }
}
