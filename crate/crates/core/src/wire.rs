//! Binary framing for protocol messages.
//!
//! Every message is a fixed 24-byte header followed by a TLV payload:
//!
//! ```text
//! magic (2) ‖ version (1) ‖ msg_type (1) ‖ session_id (16) ‖ payload_len (4, BE)
//! payload: repeated ( field_id (1) ‖ value_len (2, BE) ‖ value )
//! ```
//!
//! Parsing is strict: unknown message types or field ids, duplicated
//! fields, wrong lengths for fixed-width fields, truncated or trailing
//! bytes, and oversized payloads are all rejected with distinct errors.
//! Fields are kept in a [`BTreeMap`], so encoding is canonical: the same
//! logical message always frames to the same bytes, with fields in
//! ascending field-id order.

use std::collections::BTreeMap;

use crate::error::WireError;
use crate::ids::{DeviceId, SessionId};

/// Frame preamble identifying this protocol family.
pub const MAGIC: [u8; 2] = [0xB4, 0x5A];
/// Wire format revision.
pub const WIRE_VERSION: u8 = 0x01;
/// Fixed header length; an empty message frames to exactly this many bytes.
pub const HEADER_LEN: usize = 24;
/// Hard cap on the TLV payload, to bound allocation on hostile input.
pub const MAX_PAYLOAD_LEN: usize = 65_536;

/// The twelve protocol messages, in flow order.
#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MsgType {
    /// Device → SED: authentication request carrying the device id.
    AuthHello = 0x01,
    /// SED → device: cleartext challenge and SED nonce.
    AuthChallenge = 0x02,
    /// Device → SED: sealed challenge echo plus device nonce and nonce sum.
    AuthResponse = 0x03,
    /// SED → device: sealed configuration (new session id, CA public key).
    AuthConfig = 0x04,
    /// Device → SED: confirmation under the next-epoch MAC key.
    AuthConfirm = 0x05,
    /// Device → SED: certificate request point, authenticated by MAC.
    CertRequest = 0x06,
    /// SED → device: certificate plus private-key contribution.
    CertResponse = 0x07,
    /// Device → SED: acknowledgement over the certificate hash.
    CertAck = 0x08,
    /// Initiator → responder: initiator's certificate.
    SessHello = 0x09,
    /// Responder → initiator: responder's certificate and challenge.
    SessChallenge = 0x0A,
    /// Initiator → responder: proof of session key, initiator's challenge.
    SessResponse = 0x0B,
    /// Responder → initiator: proof of session key.
    SessConfirm = 0x0C,
}

impl MsgType {
    /// All message types, in wire-code order.
    pub const ALL: [MsgType; 12] = [
        MsgType::AuthHello,
        MsgType::AuthChallenge,
        MsgType::AuthResponse,
        MsgType::AuthConfig,
        MsgType::AuthConfirm,
        MsgType::CertRequest,
        MsgType::CertResponse,
        MsgType::CertAck,
        MsgType::SessHello,
        MsgType::SessChallenge,
        MsgType::SessResponse,
        MsgType::SessConfirm,
    ];

    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        Self::ALL
            .into_iter()
            .find(|m| *m as u8 == b)
            .ok_or(WireError::UnknownMsgType)
    }

    pub fn as_byte(self) -> u8 {
        self as u8
    }

    /// 1-based position of the message within its own flow (authentication,
    /// certification, or session establishment). Bound into MAC transcripts
    /// so a message can never stand in for a different step.
    pub fn flow_step(self) -> u8 {
        match self {
            MsgType::AuthHello => 1,
            MsgType::AuthChallenge => 2,
            MsgType::AuthResponse => 3,
            MsgType::AuthConfig => 4,
            MsgType::AuthConfirm => 5,
            MsgType::CertRequest => 1,
            MsgType::CertResponse => 2,
            MsgType::CertAck => 3,
            MsgType::SessHello => 1,
            MsgType::SessChallenge => 2,
            MsgType::SessResponse => 3,
            MsgType::SessConfirm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::AuthHello => "AuthHello",
            MsgType::AuthChallenge => "AuthChallenge",
            MsgType::AuthResponse => "AuthResponse",
            MsgType::AuthConfig => "AuthConfig",
            MsgType::AuthConfirm => "AuthConfirm",
            MsgType::CertRequest => "CertRequest",
            MsgType::CertResponse => "CertResponse",
            MsgType::CertAck => "CertAck",
            MsgType::SessHello => "SessHello",
            MsgType::SessChallenge => "SessChallenge",
            MsgType::SessResponse => "SessResponse",
            MsgType::SessConfirm => "SessConfirm",
        }
    }
}

impl std::fmt::Display for MsgType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MsgType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown message type {s:?}"))
    }
}

/// TLV field ids and their width rules.
pub mod field {
    /// 8-byte device identifier.
    pub const DEVICE_ID: u8 = 0x01;
    /// 16-byte nonce.
    pub const NONCE: u8 = 0x02;
    /// 16-byte challenge.
    pub const CHALLENGE: u8 = 0x03;
    /// Encoded curve point (length depends on the curve).
    pub const POINT: u8 = 0x04;
    /// Encoded implicit certificate.
    pub const CERT: u8 = 0x05;
    /// Encoded scalar (private-key contribution).
    pub const SCALAR: u8 = 0x06;
    /// 32-byte message authentication tag.
    pub const TAG: u8 = 0x07;
    /// Encrypt-then-MAC envelope (IV ‖ ciphertext ‖ tag).
    pub const SEALED: u8 = 0x08;

    /// Required value length, or `None` for variable-width fields.
    pub fn fixed_len(id: u8) -> Option<usize> {
        match id {
            DEVICE_ID => Some(8),
            NONCE | CHALLENGE => Some(16),
            TAG => Some(32),
            _ => None,
        }
    }

    pub fn known(id: u8) -> bool {
        (DEVICE_ID..=SEALED).contains(&id)
    }

    pub fn name(id: u8) -> &'static str {
        match id {
            DEVICE_ID => "device_id",
            NONCE => "nonce",
            CHALLENGE => "challenge",
            POINT => "point",
            CERT => "cert",
            SCALAR => "scalar",
            TAG => "tag",
            SEALED => "sealed",
            _ => "unknown",
        }
    }
}

/// A parsed (or under-construction) protocol message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub msg_type: MsgType,
    pub session_id: SessionId,
    fields: BTreeMap<u8, Vec<u8>>,
}

impl ProtocolMessage {
    pub fn new(msg_type: MsgType, session_id: SessionId) -> Self {
        ProtocolMessage {
            msg_type,
            session_id,
            fields: BTreeMap::new(),
        }
    }

    /// Sets a field value, validating the field id and any fixed width up
    /// front so a malformed message can't even be built.
    pub fn set(&mut self, field_id: u8, value: &[u8]) -> Result<&mut Self, WireError> {
        if !field::known(field_id) {
            return Err(WireError::UnknownField);
        }
        if let Some(required) = field::fixed_len(field_id) {
            if value.len() != required {
                return Err(WireError::FieldLength);
            }
        }
        if value.len() > u16::MAX as usize {
            return Err(WireError::FieldLength);
        }
        self.fields.insert(field_id, value.to_vec());
        Ok(self)
    }

    pub fn get(&self, field_id: u8) -> Option<&[u8]> {
        self.fields.get(&field_id).map(Vec::as_slice)
    }

    /// Fetches a field the current step cannot proceed without.
    pub fn require(&self, field_id: u8) -> Result<&[u8], WireError> {
        self.get(field_id)
            .ok_or(WireError::MissingField(field::name(field_id)))
    }

    /// Fetches a fixed-width field as an array. The width was enforced at
    /// parse/set time, so a present field always converts.
    pub fn require_array<const N: usize>(&self, field_id: u8) -> Result<[u8; N], WireError> {
        let bytes = self.require(field_id)?;
        bytes.try_into().map_err(|_| WireError::FieldLength)
    }

    pub fn require_device_id(&self) -> Result<DeviceId, WireError> {
        Ok(DeviceId(self.require_array::<8>(field::DEVICE_ID)?))
    }

    /// Serializes header + canonical TLV payload.
    pub fn frame(&self) -> Result<Vec<u8>, WireError> {
        let payload_len: usize = self.fields.values().map(|v| 3 + v.len()).sum();
        if payload_len > MAX_PAYLOAD_LEN {
            return Err(WireError::Oversize);
        }
        let mut out = Vec::with_capacity(HEADER_LEN + payload_len);
        out.extend_from_slice(&MAGIC);
        out.push(WIRE_VERSION);
        out.push(self.msg_type.as_byte());
        out.extend_from_slice(self.session_id.as_bytes());
        out.extend_from_slice(&(payload_len as u32).to_be_bytes());
        for (id, value) in &self.fields {
            out.push(*id);
            out.extend_from_slice(&(value.len() as u16).to_be_bytes());
            out.extend_from_slice(value);
        }
        Ok(out)
    }

    /// Parses one complete frame. The input must be exactly one message —
    /// stream transports peel frames off the socket first.
    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Length);
        }
        if bytes[0..2] != MAGIC {
            return Err(WireError::BadMagic);
        }
        if bytes[2] != WIRE_VERSION {
            return Err(WireError::BadVersion);
        }
        let msg_type = MsgType::from_byte(bytes[3])?;
        let mut session = [0u8; SessionId::LEN];
        session.copy_from_slice(&bytes[4..20]);
        let payload_len =
            u32::from_be_bytes(bytes[20..24].try_into().expect("4-byte slice")) as usize;
        if payload_len > MAX_PAYLOAD_LEN {
            return Err(WireError::Oversize);
        }
        if bytes.len() != HEADER_LEN + payload_len {
            return Err(WireError::Length);
        }

        let mut fields = BTreeMap::new();
        let payload = &bytes[HEADER_LEN..];
        let mut at = 0usize;
        while at < payload.len() {
            if payload.len() - at < 3 {
                return Err(WireError::Length);
            }
            let field_id = payload[at];
            if !field::known(field_id) {
                return Err(WireError::UnknownField);
            }
            let value_len =
                u16::from_be_bytes(payload[at + 1..at + 3].try_into().expect("2-byte slice"))
                    as usize;
            at += 3;
            if payload.len() - at < value_len {
                return Err(WireError::Length);
            }
            if let Some(required) = field::fixed_len(field_id) {
                if value_len != required {
                    return Err(WireError::FieldLength);
                }
            }
            let value = payload[at..at + value_len].to_vec();
            at += value_len;
            if fields.insert(field_id, value).is_some() {
                return Err(WireError::DuplicateField);
            }
        }
        Ok(ProtocolMessage {
            msg_type,
            session_id: SessionId(session),
            fields,
        })
    }
}

/// Fixed 18-byte prefix bound into every MAC and seal transcript:
/// `msg_type ‖ flow_step ‖ session_id`. Binding all three means a valid
/// tag can never be replayed as a different message, at a different step,
/// or inside a different session.
pub fn transcript_mac_header(
    msg_type: MsgType,
    session_id: &SessionId,
    flow_step: u8,
) -> [u8; 18] {
    let mut header = [0u8; 18];
    header[0] = msg_type.as_byte();
    header[1] = flow_step;
    header[2..].copy_from_slice(session_id.as_bytes());
    header
}

/// The configuration blob sealed inside `AuthConfig`: the session id the
/// device must use from now on, plus the SED's CA identity so the device
/// can later verify certificates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigPayload {
    pub session_id: SessionId,
    pub algorithm_id: crate::ec::AlgorithmId,
    pub sed_public_key: crate::ec::Point,
    pub sed_id: DeviceId,
}

impl ConfigPayload {
    /// `session_id ‖ algorithm_id ‖ point ‖ sed_id`.
    pub fn encode(&self) -> Result<Vec<u8>, crate::error::ProtocolError> {
        let curve = crate::ec::curve_for(self.algorithm_id)
            .ok_or(crate::error::ProtocolError::BadConfig)?;
        if !curve.contains(&self.sed_public_key) || self.sed_public_key.is_infinity() {
            return Err(crate::error::ProtocolError::BadConfig);
        }
        let point = curve.point_to_bytes(&self.sed_public_key);
        let mut out = Vec::with_capacity(SessionId::LEN + 1 + point.len() + DeviceId::LEN);
        out.extend_from_slice(self.session_id.as_bytes());
        out.push(self.algorithm_id.0);
        out.extend_from_slice(&point);
        out.extend_from_slice(self.sed_id.as_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, crate::error::ProtocolError> {
        use crate::error::ProtocolError::BadConfig;
        if bytes.len() < SessionId::LEN + 1 + DeviceId::LEN {
            return Err(BadConfig);
        }
        let mut session = [0u8; SessionId::LEN];
        session.copy_from_slice(&bytes[..SessionId::LEN]);
        let algorithm_id = crate::ec::AlgorithmId(bytes[SessionId::LEN]);
        let curve = crate::ec::curve_for(algorithm_id).ok_or(BadConfig)?;
        let rest = &bytes[SessionId::LEN + 1..];
        if rest.len() < DeviceId::LEN {
            return Err(BadConfig);
        }
        let (point_bytes, id_bytes) = rest.split_at(rest.len() - DeviceId::LEN);
        let sed_public_key = curve.point_from_bytes(point_bytes).map_err(|_| BadConfig)?;
        if sed_public_key.is_infinity() {
            return Err(BadConfig);
        }
        let mut sed_id = [0u8; DeviceId::LEN];
        sed_id.copy_from_slice(id_bytes);
        Ok(ConfigPayload {
            session_id: SessionId(session),
            algorithm_id,
            sed_public_key,
            sed_id: DeviceId(sed_id),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::{algorithm_by_name, ALG_TOY17_SHA256};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sample_message() -> ProtocolMessage {
        let mut m = ProtocolMessage::new(MsgType::CertRequest, SessionId([7; 16]));
        m.set(field::DEVICE_ID, b"turbine1").unwrap();
        m.set(field::POINT, &[0x04, 10, 6]).unwrap();
        m.set(field::NONCE, &[0xAA; 16]).unwrap();
        m.set(field::TAG, &[0xBB; 32]).unwrap();
        m
    }

    #[test]
    fn empty_message_frames_to_exactly_the_header() {
        let m = ProtocolMessage::new(MsgType::AuthHello, SessionId::ZERO);
        let bytes = m.frame().unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(bytes[0..2], MAGIC);
        assert_eq!(bytes[2], WIRE_VERSION);
        assert_eq!(bytes[3], 0x01);
        assert_eq!(&bytes[4..20], &[0u8; 16]);
        assert_eq!(&bytes[20..24], &[0, 0, 0, 0]);
        assert_eq!(ProtocolMessage::parse(&bytes).unwrap(), m);
    }

    #[test]
    fn frame_parse_roundtrip_preserves_all_fields() {
        let m = sample_message();
        let bytes = m.frame().unwrap();
        let back = ProtocolMessage::parse(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.require_device_id().unwrap(), DeviceId(*b"turbine1"));
        assert_eq!(back.require(field::POINT).unwrap(), &[0x04, 10, 6]);
        assert_eq!(back.require_array::<32>(field::TAG).unwrap(), [0xBB; 32]);
    }

    #[test]
    fn encoding_is_canonical_regardless_of_insertion_order() {
        let mut a = ProtocolMessage::new(MsgType::AuthChallenge, SessionId([1; 16]));
        a.set(field::NONCE, &[2; 16]).unwrap();
        a.set(field::DEVICE_ID, &[1; 8]).unwrap();
        a.set(field::CHALLENGE, &[3; 16]).unwrap();
        let mut b = ProtocolMessage::new(MsgType::AuthChallenge, SessionId([1; 16]));
        b.set(field::CHALLENGE, &[3; 16]).unwrap();
        b.set(field::DEVICE_ID, &[1; 8]).unwrap();
        b.set(field::NONCE, &[2; 16]).unwrap();
        assert_eq!(a.frame().unwrap(), b.frame().unwrap());
        // Ascending field ids on the wire.
        let bytes = a.frame().unwrap();
        let ids = [bytes[24], bytes[24 + 3 + 8], bytes[24 + 3 + 8 + 3 + 16]];
        assert_eq!(ids, [field::DEVICE_ID, field::NONCE, field::CHALLENGE]);
    }

    #[test]
    fn header_corruption_yields_distinct_errors() {
        let good = sample_message().frame().unwrap();

        let mut bad = good.clone();
        bad[0] ^= 0xFF;
        assert_eq!(ProtocolMessage::parse(&bad), Err(WireError::BadMagic));

        let mut bad = good.clone();
        bad[2] = 0x02;
        assert_eq!(ProtocolMessage::parse(&bad), Err(WireError::BadVersion));

        let mut bad = good.clone();
        bad[3] = 0x0D;
        assert_eq!(ProtocolMessage::parse(&bad), Err(WireError::UnknownMsgType));
        let mut bad = good.clone();
        bad[3] = 0x00;
        assert_eq!(ProtocolMessage::parse(&bad), Err(WireError::UnknownMsgType));
    }

    #[test]
    fn oversized_payload_is_rejected_before_allocation() {
        // Declared length one past the cap.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.push(WIRE_VERSION);
        bytes.push(0x01);
        bytes.extend_from_slice(&[0; 16]);
        bytes.extend_from_slice(&((MAX_PAYLOAD_LEN as u32) + 1).to_be_bytes());
        assert_eq!(ProtocolMessage::parse(&bytes), Err(WireError::Oversize));
    }

    #[test]
    fn oversize_is_also_enforced_when_framing() {
        let mut m = ProtocolMessage::new(MsgType::AuthHello, SessionId::ZERO);
        // Two maximal variable fields exceed the payload cap together.
        m.set(field::CERT, &vec![0u8; u16::MAX as usize]).unwrap();
        m.set(field::SEALED, &vec![0u8; u16::MAX as usize]).unwrap();
        assert_eq!(m.frame(), Err(WireError::Oversize));
        // And a single field larger than its 2-byte length can express is
        // rejected at set time.
        let mut m = ProtocolMessage::new(MsgType::AuthHello, SessionId::ZERO);
        assert_eq!(
            m.set(field::CERT, &vec![0u8; u16::MAX as usize + 1])
                .unwrap_err(),
            WireError::FieldLength
        );
    }

    #[test]
    fn duplicate_unknown_and_miswidth_fields_are_rejected() {
        // Hand-build a payload with the same field twice.
        let mut payload = Vec::new();
        for _ in 0..2 {
            payload.push(field::NONCE);
            payload.extend_from_slice(&16u16.to_be_bytes());
            payload.extend_from_slice(&[9; 16]);
        }
        assert_eq!(parse_with_payload(&payload), Err(WireError::DuplicateField));

        let mut payload = Vec::new();
        payload.push(0xFF);
        payload.extend_from_slice(&1u16.to_be_bytes());
        payload.push(0);
        assert_eq!(parse_with_payload(&payload), Err(WireError::UnknownField));
        let mut payload = Vec::new();
        payload.push(0x00);
        payload.extend_from_slice(&1u16.to_be_bytes());
        payload.push(0);
        assert_eq!(parse_with_payload(&payload), Err(WireError::UnknownField));

        // DEVICE_ID must be exactly 8 bytes.
        let mut payload = Vec::new();
        payload.push(field::DEVICE_ID);
        payload.extend_from_slice(&7u16.to_be_bytes());
        payload.extend_from_slice(&[0; 7]);
        assert_eq!(parse_with_payload(&payload), Err(WireError::FieldLength));
    }

    fn parse_with_payload(payload: &[u8]) -> Result<ProtocolMessage, WireError> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.push(WIRE_VERSION);
        bytes.push(0x03);
        bytes.extend_from_slice(&[1; 16]);
        bytes.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        bytes.extend_from_slice(payload);
        ProtocolMessage::parse(&bytes)
    }

    #[test]
    fn every_truncation_and_extension_fails_cleanly() {
        let good = sample_message().frame().unwrap();
        for cut in 0..good.len() {
            assert!(
                ProtocolMessage::parse(&good[..cut]).is_err(),
                "truncation to {cut} bytes must fail"
            );
        }
        let mut extended = good.clone();
        extended.push(0x00);
        assert_eq!(ProtocolMessage::parse(&extended), Err(WireError::Length));
    }

    #[test]
    fn setters_reject_what_parse_rejects() {
        let mut m = ProtocolMessage::new(MsgType::AuthHello, SessionId::ZERO);
        assert_eq!(m.set(0xEE, &[1]).unwrap_err(), WireError::UnknownField);
        assert_eq!(
            m.set(field::TAG, &[0; 31]).unwrap_err(),
            WireError::FieldLength
        );
        assert_eq!(
            m.require(field::TAG).unwrap_err(),
            WireError::MissingField("tag")
        );
    }

    #[test]
    fn random_bytes_never_panic_the_parser() {
        let mut rng = ChaCha20Rng::seed_from_u64(0x1234);
        for round in 0..20_000 {
            let len = (round % 97) * 3;
            let mut bytes = vec![0u8; len];
            rng.fill_bytes(&mut bytes);
            // Make a fraction of them look like real headers so the fuzz
            // reaches the TLV loop.
            if round % 3 == 0 && bytes.len() >= 4 {
                bytes[0] = MAGIC[0];
                bytes[1] = MAGIC[1];
                bytes[2] = WIRE_VERSION;
                bytes[3] = (round % 12 + 1) as u8;
            }
            let _ = ProtocolMessage::parse(&bytes);
        }
    }

    #[test]
    fn transcript_header_layout_is_pinned() {
        let session = SessionId([0xCD; 16]);
        let header = transcript_mac_header(MsgType::AuthResponse, &session, 3);
        assert_eq!(header.len(), 18);
        assert_eq!(header[0], 0x03);
        assert_eq!(header[1], 3);
        assert_eq!(&header[2..], &[0xCD; 16]);
        // Different steps and sessions produce different headers.
        assert_ne!(
            transcript_mac_header(MsgType::AuthResponse, &session, 3),
            transcript_mac_header(MsgType::AuthConfig, &session, 4)
        );
        assert_ne!(
            transcript_mac_header(MsgType::AuthResponse, &SessionId([1; 16]), 3),
            transcript_mac_header(MsgType::AuthResponse, &SessionId([2; 16]), 3)
        );
    }

    #[test]
    fn flow_steps_are_pinned_per_flow() {
        let steps: Vec<u8> = MsgType::ALL.iter().map(|m| m.flow_step()).collect();
        assert_eq!(steps, vec![1, 2, 3, 4, 5, 1, 2, 3, 1, 2, 3, 4]);
    }

    #[test]
    fn msg_type_names_roundtrip_through_fromstr() {
        for m in MsgType::ALL {
            assert_eq!(m.name().parse::<MsgType>().unwrap(), m);
            assert_eq!(m.name().to_lowercase().parse::<MsgType>().unwrap(), m);
        }
        assert!("AuthNonsense".parse::<MsgType>().is_err());
    }

    #[test]
    fn config_payload_roundtrips_on_both_curves() {
        for name in ["toy17", "p256"] {
            let alg = algorithm_by_name(name).unwrap();
            let curve = crate::ec::curve_for(alg).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(42);
            let d = curve.random_scalar(&mut rng).unwrap();
            let payload = ConfigPayload {
                session_id: SessionId([0x31; 16]),
                algorithm_id: alg,
                sed_public_key: curve.scalar_mul_base(&d),
                sed_id: DeviceId(*b"sed-0001"),
            };
            let bytes = payload.encode().unwrap();
            assert_eq!(
                bytes.len(),
                16 + 1 + curve.point_encoding_len() + 8,
                "{name}"
            );
            assert_eq!(ConfigPayload::decode(&bytes).unwrap(), payload);
        }
    }

    #[test]
    fn malformed_config_payloads_are_rejected() {
        use crate::error::ProtocolError;
        let curve = crate::ec::curve_for(ALG_TOY17_SHA256).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let d = curve.random_scalar(&mut rng).unwrap();
        let payload = ConfigPayload {
            session_id: SessionId([0x31; 16]),
            algorithm_id: ALG_TOY17_SHA256,
            sed_public_key: curve.scalar_mul_base(&d),
            sed_id: DeviceId(*b"sed-0001"),
        };
        let good = payload.encode().unwrap();

        for cut in 0..good.len() {
            assert_eq!(
                ConfigPayload::decode(&good[..cut]).unwrap_err(),
                ProtocolError::BadConfig,
                "cut at {cut}"
            );
        }
        let mut extended = good.clone();
        extended.push(0);
        assert!(ConfigPayload::decode(&extended).is_err());

        // Unknown algorithm id.
        let mut bad = good.clone();
        bad[16] = 0x77;
        assert_eq!(
            ConfigPayload::decode(&bad).unwrap_err(),
            ProtocolError::BadConfig
        );
        // Unrecognized point encoding tag.
        let mut bad = good.clone();
        bad[17] = 0x05;
        assert!(ConfigPayload::decode(&bad).is_err());
        // Identity point refused even when well-formed.
        let identity = ConfigPayload {
            sed_public_key: crate::ec::Point::Infinity,
            ..payload
        };
        assert_eq!(identity.encode().unwrap_err(), ProtocolError::BadConfig);
    }
}
