//! Minimal fixed-layout implicit-certificate codec.
//!
//! The certificate carries no signature — its public-key reconstruction
//! point, combined with the issuing CA's public key, *is* the
//! authentication (see [`crate::ecqv`]). The layout is deliberately tiny
//! and extension-free so that parsing is a handful of fixed offsets:
//!
//! ```text
//! version (1, = 0x01) ‖ algorithm_id (1) ‖ session_id (16) ‖
//! issuer_id (8) ‖ subject_id (8) ‖ valid_from (8 BE) ‖ valid_to (8 BE) ‖
//! reconstruction point (curve-specific width)
//! ```
//!
//! On the production 256-bit curve a certificate is 115 bytes, a fraction
//! of a comparable X.509 chain.

use crate::ec::{curve_for, AlgorithmId, Point};
use crate::error::CertError;
use crate::ids::{DeviceId, SessionId};

/// Certificate layout version byte.
pub const CERT_VERSION: u8 = 0x01;
/// Certificates never exceed this size on any registered curve.
pub const MAX_CERT_LEN: usize = 128;

/// Byte offset of the reconstruction point within an encoded certificate
/// (public so diagnostics can name the offending offset).
pub const POINT_OFFSET: usize = 1 + 1 + SessionId::LEN + DeviceId::LEN + DeviceId::LEN + 8 + 8;

/// Issuer, subject, suite, and validity window of one certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CertMeta {
    pub algorithm_id: AlgorithmId,
    pub issuer_id: DeviceId,
    pub subject_id: DeviceId,
    /// Validity window in seconds since the epoch: `valid_from <= t <
    /// valid_to`.
    pub valid_from: u64,
    pub valid_to: u64,
}

/// A decoded implicit certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub session_id: SessionId,
    pub meta: CertMeta,
    pub reconstruction_point: Point,
}

impl Certificate {
    /// Serializes to the canonical byte layout. Encoding is deterministic:
    /// equal certificates always produce identical bytes.
    pub fn encode(&self) -> Result<Vec<u8>, CertError> {
        let curve = curve_for(self.meta.algorithm_id).ok_or(CertError::UnknownAlgorithm)?;
        if self.meta.valid_from >= self.meta.valid_to {
            return Err(CertError::InvalidValidity);
        }
        if !curve.contains(&self.reconstruction_point) {
            return Err(CertError::OffCurvePoint);
        }
        let point = curve.point_to_bytes(&self.reconstruction_point);
        let mut out = Vec::with_capacity(POINT_OFFSET + point.len());
        out.push(CERT_VERSION);
        out.push(self.meta.algorithm_id.0);
        out.extend_from_slice(self.session_id.as_bytes());
        out.extend_from_slice(self.meta.issuer_id.as_bytes());
        out.extend_from_slice(self.meta.subject_id.as_bytes());
        out.extend_from_slice(&self.meta.valid_from.to_be_bytes());
        out.extend_from_slice(&self.meta.valid_to.to_be_bytes());
        out.extend_from_slice(&point);
        debug_assert!(out.len() <= MAX_CERT_LEN);
        Ok(out)
    }

    /// Strict inverse of [`encode`](Self::encode): fixed offsets, exact
    /// length, no alternative encodings, no trailing bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        if bytes.is_empty() || bytes.len() < POINT_OFFSET + 1 {
            // Not even room for the fixed header plus a point tag; check the
            // version first so a wrong-version prefix reports as such.
            if bytes.first().is_some_and(|&v| v != CERT_VERSION) {
                return Err(CertError::UnknownVersion);
            }
            return Err(CertError::LengthMismatch);
        }
        if bytes[0] != CERT_VERSION {
            return Err(CertError::UnknownVersion);
        }
        let algorithm_id = AlgorithmId(bytes[1]);
        let curve = curve_for(algorithm_id).ok_or(CertError::UnknownAlgorithm)?;

        let expected_len = POINT_OFFSET
            + match bytes[POINT_OFFSET] {
                0x00 => 1,
                0x04 => curve.point_encoding_len(),
                _ => return Err(CertError::PointEncoding),
            };
        if bytes.len() < expected_len {
            return Err(CertError::LengthMismatch);
        }
        if bytes.len() > expected_len {
            return Err(CertError::TrailingGarbage);
        }

        let mut session = [0u8; SessionId::LEN];
        session.copy_from_slice(&bytes[2..2 + SessionId::LEN]);
        let mut issuer = [0u8; DeviceId::LEN];
        issuer.copy_from_slice(&bytes[18..26]);
        let mut subject = [0u8; DeviceId::LEN];
        subject.copy_from_slice(&bytes[26..34]);
        let valid_from = u64::from_be_bytes(bytes[34..42].try_into().expect("fixed slice"));
        let valid_to = u64::from_be_bytes(bytes[42..50].try_into().expect("fixed slice"));
        if valid_from >= valid_to {
            return Err(CertError::InvalidValidity);
        }

        let reconstruction_point =
            curve
                .point_from_bytes(&bytes[POINT_OFFSET..])
                .map_err(|e| match e {
                    crate::error::EcError::OffCurve => CertError::OffCurvePoint,
                    _ => CertError::PointEncoding,
                })?;

        Ok(Certificate {
            session_id: SessionId(session),
            meta: CertMeta {
                algorithm_id,
                issuer_id: DeviceId(issuer),
                subject_id: DeviceId(subject),
                valid_from,
                valid_to,
            },
            reconstruction_point,
        })
    }

    /// True iff `now` falls inside the half-open validity window.
    pub fn is_valid_at(&self, now: u64) -> bool {
        self.meta.valid_from <= now && now < self.meta.valid_to
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::{ALG_P256_SHA256, ALG_TOY17_SHA256};
    use num_bigint::BigUint;

    fn toy_cert() -> Certificate {
        Certificate {
            session_id: SessionId([0xAA; 16]),
            meta: CertMeta {
                algorithm_id: ALG_TOY17_SHA256,
                issuer_id: DeviceId(*b"sed-one\0"),
                subject_id: DeviceId(*b"bms-two\0"),
                valid_from: 100,
                valid_to: 1_000,
            },
            // 7G on the toy curve.
            reconstruction_point: Point::Affine {
                x: BigUint::from(0u8),
                y: BigUint::from(6u8),
            },
        }
    }

    #[test]
    fn roundtrip_is_exact_and_deterministic() {
        let cert = toy_cert();
        let a = cert.encode().unwrap();
        let b = cert.encode().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 53);
        let back = Certificate::decode(&a).unwrap();
        assert_eq!(back, cert);
        assert_eq!(back.encode().unwrap(), a);
    }

    #[test]
    fn production_curve_certificate_fits_the_size_budget() {
        let curve = curve_for(ALG_P256_SHA256).unwrap();
        let cert = Certificate {
            session_id: SessionId([1; 16]),
            meta: CertMeta {
                algorithm_id: ALG_P256_SHA256,
                issuer_id: DeviceId([2; 8]),
                subject_id: DeviceId([3; 8]),
                valid_from: 0,
                valid_to: u64::MAX,
            },
            reconstruction_point: curve.generator.clone(),
        };
        let bytes = cert.encode().unwrap();
        assert_eq!(bytes.len(), 115);
        assert!(bytes.len() <= MAX_CERT_LEN);
        assert_eq!(Certificate::decode(&bytes).unwrap(), cert);
    }

    #[test]
    fn identity_reconstruction_point_encodes_as_one_byte() {
        let mut cert = toy_cert();
        cert.reconstruction_point = Point::Infinity;
        let bytes = cert.encode().unwrap();
        assert_eq!(bytes.len(), POINT_OFFSET + 1);
        assert_eq!(bytes[POINT_OFFSET], 0x00);
        assert_eq!(Certificate::decode(&bytes).unwrap(), cert);
    }

    #[test]
    fn each_malformation_reports_its_own_error() {
        let good = toy_cert().encode().unwrap();

        assert_eq!(Certificate::decode(&[]), Err(CertError::LengthMismatch));
        assert_eq!(
            Certificate::decode(&good[..30]),
            Err(CertError::LengthMismatch)
        );

        let mut v = good.clone();
        v[0] = 0x02;
        assert_eq!(Certificate::decode(&v), Err(CertError::UnknownVersion));
        assert_eq!(
            Certificate::decode(&[0x07, 0x01]),
            Err(CertError::UnknownVersion)
        );

        let mut v = good.clone();
        v[1] = 0x33;
        assert_eq!(Certificate::decode(&v), Err(CertError::UnknownAlgorithm));

        let mut v = good.clone();
        v.push(0x00);
        assert_eq!(Certificate::decode(&v), Err(CertError::TrailingGarbage));

        // (4, 4) is not on the toy curve.
        let mut v = good.clone();
        v[POINT_OFFSET + 1] = 4;
        v[POINT_OFFSET + 2] = 4;
        assert_eq!(Certificate::decode(&v), Err(CertError::OffCurvePoint));

        let mut v = good.clone();
        v[POINT_OFFSET] = 0x02;
        assert_eq!(Certificate::decode(&v), Err(CertError::PointEncoding));

        // Inverted validity window.
        let mut v = good;
        v[34..42].copy_from_slice(&5_000u64.to_be_bytes());
        assert_eq!(Certificate::decode(&v), Err(CertError::InvalidValidity));
    }

    #[test]
    fn encode_rejects_bad_inputs() {
        let mut cert = toy_cert();
        cert.meta.valid_to = cert.meta.valid_from;
        assert_eq!(cert.encode(), Err(CertError::InvalidValidity));

        let mut cert = toy_cert();
        cert.meta.algorithm_id = AlgorithmId(0x9F);
        assert_eq!(cert.encode(), Err(CertError::UnknownAlgorithm));

        let mut cert = toy_cert();
        cert.reconstruction_point = Point::Affine {
            x: BigUint::from(4u8),
            y: BigUint::from(4u8),
        };
        assert_eq!(cert.encode(), Err(CertError::OffCurvePoint));
    }

    #[test]
    fn validity_window_is_half_open()
    {
        let cert = toy_cert();
        assert!(!cert.is_valid_at(99));
        assert!(cert.is_valid_at(100));
        assert!(cert.is_valid_at(999));
        assert!(!cert.is_valid_at(1_000));
    }
}
