//! Error taxonomy shared across the protocol stack.
//!
//! Each layer keeps its own error enum so callers can tell a parse problem
//! from an authentication failure without string matching. The role state
//! machines wrap all of them in [`ProtocolError`].

use thiserror::Error;

/// Elliptic-curve group errors.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EcError {
    #[error("point is not on the curve")]
    OffCurve,
    #[error("scalar is out of range for the group order")]
    ScalarRange,
    #[error("invalid point or scalar encoding")]
    Encoding,
    #[error("curve parameters are invalid: {0}")]
    InvalidParams(&'static str),
}

/// Symmetric-suite errors.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("entropy source failed")]
    Entropy,
    /// The MAC tag did not verify. Returned before any decryption happens.
    #[error("message authentication failed")]
    AuthenticationFailure,
    /// Tag verified but the plaintext padding was invalid. This signals an
    /// implementation bug on the sender side, not an attack.
    #[error("malformed message behind a valid tag")]
    MalformedMessage,
    /// A sealed blob that cannot even be split into IV, ciphertext, and
    /// tag. Raised before any key is consulted.
    #[error("sealed message encoding is invalid")]
    SealedEncoding,
    #[error("requested KDF output length is out of range")]
    KdfLength,
}

/// Certificate codec errors, one variant per failure the decoder can report.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("certificate length mismatch")]
    LengthMismatch,
    #[error("unknown certificate version")]
    UnknownVersion,
    #[error("unknown algorithm identifier")]
    UnknownAlgorithm,
    #[error("invalid reconstruction point encoding")]
    PointEncoding,
    #[error("reconstruction point is not on the curve")]
    OffCurvePoint,
    #[error("trailing bytes after certificate body")]
    TrailingGarbage,
    #[error("validity window is empty or inverted")]
    InvalidValidity,
}

/// Wire framing and TLV payload errors.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported frame version")]
    BadVersion,
    #[error("frame length does not match contents")]
    Length,
    #[error("payload exceeds the 64 KiB cap")]
    Oversize,
    #[error("unknown message type tag")]
    UnknownMsgType,
    #[error("unknown payload field")]
    UnknownField,
    #[error("duplicate payload field")]
    DuplicateField,
    #[error("payload field has the wrong length")]
    FieldLength,
    #[error("required payload field missing: {0}")]
    MissingField(&'static str),
}

/// ECQV issuance and reconstruction errors.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EcqvError {
    #[error("certificate request point is invalid")]
    BadRequestPoint,
    /// The `pub == prk*G` acceptance check failed: the certificate or the
    /// private-key contribution was tampered with, or CA and requester
    /// disagree about the domain parameters.
    #[error("key reconstruction check failed")]
    ReconstructionFailed,
    #[error("certificate hash reduced to zero after retry limit")]
    DegenerateHash,
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Ec(#[from] EcError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Top-level protocol errors raised by the role state machines.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("device is not known to this ledger")]
    UnknownDevice,
    #[error("no session with this id")]
    UnknownSession,
    #[error("message not valid in the current state")]
    UnexpectedMessage,
    #[error("nonce was already used")]
    Replay,
    #[error("nonce sum does not verify")]
    NonceSumMismatch,
    #[error("challenge echo does not match")]
    ChallengeMismatch,
    #[error("peer certificate is expired or not yet valid")]
    Expired,
    #[error("peer failed mutual authentication")]
    UnauthenticatedPeer,
    #[error("configuration payload is unacceptable")]
    BadConfig,
    #[error("key agreement produced a degenerate point")]
    DegenerateKeyAgreement,
    #[error("certification failed: {0}")]
    CertificationFailed(EcqvError),
    #[error("device status does not allow this operation")]
    WrongStatus,
    #[error("provisioning rejected: {0}")]
    Provisioning(&'static str),
    #[error("ledger storage failure: {0}")]
    Storage(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Ec(#[from] EcError),
}

impl From<EcqvError> for ProtocolError {
    fn from(e: EcqvError) -> Self {
        ProtocolError::CertificationFailed(e)
    }
}
