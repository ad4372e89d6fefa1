//! Lightweight authentication stack for supervised devices on closed
//! industrial networks.
//!
//! The crate provides, bottom-up:
//!
//! * [`ec`] — short-Weierstrass group arithmetic with a production curve
//!   (P-256) and a 19-element toy group for exhaustive testing.
//! * [`crypto`] — the symmetric suite: encrypt-then-MAC sealing, labeled
//!   key derivation, the forward-secret key ratchet, and nonce handling.
//! * [`cert`] — the fixed-layout implicit-certificate codec (≤ 128 bytes).
//! * [`ecqv`] — implicit-certificate issuance and key reconstruction.
//! * [`wire`] — framed, type-tagged protocol messages with strict parsing.
//! * [`roles`] — the authenticator and device state machines: provisioning,
//!   challenge–response authentication with key ratcheting, certificate
//!   enrollment, and certificate-based session establishment.
//! * [`sim`] — a deterministic in-process network simulator with a scripted
//!   man-in-the-middle adversary, the standard threat suite, and timing
//!   benchmarks.

pub mod cert;
pub mod crypto;
pub mod ec;
pub mod ecqv;
pub mod error;
pub mod ids;
pub mod roles;
pub mod sim;
pub mod transport;
pub mod wire;
