//! Certificate-based session establishment between two certified devices.
//!
//! The authenticator is offline here: each side validates the peer's
//! implicit certificate against the CA public key it received during its
//! own authentication, reconstructs the peer's public key from the
//! certificate, and derives a shared session key from the Diffie–Hellman
//! point and both challenges. The final two messages prove, in both
//! directions, possession of the derived key — which transitively proves
//! possession of a private key matching a CA-endorsed certificate. A
//! certificate minted by anyone but the CA reconstructs to a key the
//! holder cannot match, so the proof fails.
//!
//! Neither side treats the session key as established until the peer has
//! proven it: [`SessionContext::session_key`] yields nothing before that
//! proof verifies.

use rand::TryCryptoRng;

use crate::cert::Certificate;
use crate::crypto::{self, fresh_challenge, Challenge, KEY_LEN};
use crate::ec::{curve_for, AlgorithmId, CurveParams, Point, Scalar};
use crate::ecqv::reconstruct_peer_public;
use crate::error::ProtocolError;
use crate::ids::{DeviceId, SessionId};
use crate::roles::Credential;
use crate::wire::{field, transcript_mac_header, MsgType, ProtocolMessage};

/// Domain label binding application traffic keys to their purpose.
const APP_SALT: &[u8] = b"app";
/// Authenticated header for sealed application messages.
const APP_HEADER: &[u8] = b"app-msg";

enum SessState {
    /// Initiator: hello sent, waiting for the responder's certificate.
    InitSentHello,
    /// Responder: waiting for an initiator.
    RespAwaitHello,
    /// Responder: challenge sent.
    RespSentChallenge { chg_b: Challenge },
    /// Initiator: key derived and proof sent, waiting for the peer's proof.
    InitSentResponse { chg_a: Challenge, key: [u8; KEY_LEN] },
    /// Both proofs verified; the key is live.
    Established { key: [u8; KEY_LEN] },
    /// A verification failed; the context is dead.
    Failed,
}

/// One side of a peer-to-peer session handshake.
pub struct SessionContext {
    device_id: DeviceId,
    algorithm_id: AlgorithmId,
    private: Scalar,
    own_cert_bytes: Vec<u8>,
    ca_public: Point,
    peer_public: Option<Point>,
    peer_id: Option<DeviceId>,
    transcript: Option<[u8; 32]>,
    state: SessState,
}

impl SessionContext {
    fn from_credential(credential: &Credential, state: SessState) -> Result<Self, ProtocolError> {
        Ok(SessionContext {
            device_id: credential.device_id,
            algorithm_id: credential.keys.algorithm_id(),
            private: credential.keys.private().clone(),
            own_cert_bytes: credential.certificate.encode()?,
            ca_public: credential.ca_public.clone(),
            peer_public: None,
            peer_id: None,
            transcript: None,
            state,
        })
    }

    /// Starts a session: returns the context and the hello to send.
    pub fn initiate(
        credential: &Credential,
    ) -> Result<(Self, ProtocolMessage), ProtocolError> {
        let ctx = Self::from_credential(credential, SessState::InitSentHello)?;
        let mut hello = ProtocolMessage::new(MsgType::SessHello, SessionId::ZERO);
        hello.set(field::CERT, &ctx.own_cert_bytes)?;
        Ok((ctx, hello))
    }

    /// Prepares to answer a session initiator.
    pub fn respond(credential: &Credential) -> Result<Self, ProtocolError> {
        Self::from_credential(credential, SessState::RespAwaitHello)
    }

    pub fn is_established(&self) -> bool {
        matches!(self.state, SessState::Established { .. })
    }

    /// The agreed key — only once the peer has proven it holds it too.
    pub fn session_key(&self) -> Option<&[u8; KEY_LEN]> {
        match &self.state {
            SessState::Established { key } => Some(key),
            _ => None,
        }
    }

    /// Short hash of the session key for operator-facing comparison.
    pub fn key_fingerprint(&self) -> Option<String> {
        self.session_key().map(|k| crypto::fingerprint(k))
    }

    /// The peer's device id, once its certificate has been seen.
    pub fn peer_id(&self) -> Option<DeviceId> {
        self.peer_id
    }

    /// Processes one handshake message and returns the replies.
    pub fn handle_frame<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let result = match msg.msg_type {
            MsgType::SessHello => self.on_hello(msg, now, rng),
            MsgType::SessChallenge => self.on_challenge(msg, now, rng),
            MsgType::SessResponse => self.on_response(msg),
            MsgType::SessConfirm => self.on_confirm(msg),
            _ => Err(ProtocolError::UnexpectedMessage),
        };
        if result.is_err() {
            self.state = SessState::Failed;
        }
        result
    }

    fn on_hello<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        if !matches!(self.state, SessState::RespAwaitHello) {
            return Err(ProtocolError::UnexpectedMessage);
        }
        let initiator_cert_bytes = msg.require(field::CERT)?;
        self.take_peer_certificate(initiator_cert_bytes, now)?;
        // Transcript binds both certificates, initiator's first.
        let mut both = initiator_cert_bytes.to_vec();
        both.extend_from_slice(&self.own_cert_bytes);
        self.transcript = Some(crypto::hash(&both));

        let chg_b = fresh_challenge(rng)?;
        self.state = SessState::RespSentChallenge { chg_b };
        let mut reply = ProtocolMessage::new(MsgType::SessChallenge, SessionId::ZERO);
        reply.set(field::CERT, &self.own_cert_bytes)?;
        reply.set(field::CHALLENGE, &chg_b)?;
        Ok(vec![reply])
    }

    fn on_challenge<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        if !matches!(self.state, SessState::InitSentHello) {
            return Err(ProtocolError::UnexpectedMessage);
        }
        let responder_cert_bytes = msg.require(field::CERT)?;
        let chg_b: Challenge = msg.require_array::<16>(field::CHALLENGE)?;
        self.take_peer_certificate(responder_cert_bytes, now)?;
        let mut both = self.own_cert_bytes.clone();
        both.extend_from_slice(responder_cert_bytes);
        self.transcript = Some(crypto::hash(&both));

        let chg_a = fresh_challenge(rng)?;
        let key = self.derive_key(&chg_a, &chg_b)?;
        let proof = self.key_proof(&key, MsgType::SessResponse, 3, &chg_b);

        self.state = SessState::InitSentResponse { chg_a, key };
        let mut reply = ProtocolMessage::new(MsgType::SessResponse, SessionId::ZERO);
        reply.set(field::TAG, &proof)?;
        reply.set(field::CHALLENGE, &chg_a)?;
        Ok(vec![reply])
    }

    fn on_response(&mut self, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let chg_b = match &self.state {
            SessState::RespSentChallenge { chg_b } => *chg_b,
            _ => return Err(ProtocolError::UnexpectedMessage),
        };
        let chg_a: Challenge = msg.require_array::<16>(field::CHALLENGE)?;
        let their_proof = msg.require_array::<32>(field::TAG)?;

        let key = self.derive_key(&chg_a, &chg_b)?;
        if !crypto::verify_mac(
            &key,
            &self.proof_transcript(MsgType::SessResponse, 3, &chg_b),
            &their_proof,
        ) {
            return Err(ProtocolError::UnauthenticatedPeer);
        }

        let our_proof = self.key_proof(&key, MsgType::SessConfirm, 4, &chg_a);
        self.state = SessState::Established { key };
        let mut reply = ProtocolMessage::new(MsgType::SessConfirm, SessionId::ZERO);
        reply.set(field::TAG, &our_proof)?;
        Ok(vec![reply])
    }

    fn on_confirm(&mut self, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let (chg_a, key) = match &self.state {
            SessState::InitSentResponse { chg_a, key } => (*chg_a, *key),
            _ => return Err(ProtocolError::UnexpectedMessage),
        };
        let their_proof = msg.require_array::<32>(field::TAG)?;
        if !crypto::verify_mac(
            &key,
            &self.proof_transcript(MsgType::SessConfirm, 4, &chg_a),
            &their_proof,
        ) {
            return Err(ProtocolError::UnauthenticatedPeer);
        }
        self.state = SessState::Established { key };
        Ok(Vec::new())
    }

    /// Validates the peer certificate and reconstructs its public key.
    fn take_peer_certificate(&mut self, cert_bytes: &[u8], now: u64) -> Result<(), ProtocolError> {
        let certificate = Certificate::decode(cert_bytes)?;
        if certificate.meta.algorithm_id != self.algorithm_id {
            return Err(ProtocolError::BadConfig);
        }
        if !certificate.is_valid_at(now) {
            return Err(ProtocolError::Expired);
        }
        let peer_public = reconstruct_peer_public(&certificate, &self.ca_public)?;
        self.peer_id = Some(certificate.meta.subject_id);
        self.peer_public = Some(peer_public);
        Ok(())
    }

    /// `k_s = KDF(x-coordinate of prk·peer_pub, "sess", sorted challenges)`.
    fn derive_key(&self, chg_x: &Challenge, chg_y: &Challenge) -> Result<[u8; KEY_LEN], ProtocolError> {
        let curve = self.curve();
        let peer_public = self
            .peer_public
            .as_ref()
            .ok_or(ProtocolError::UnexpectedMessage)?;
        let shared = curve.scalar_mul(&self.private, peer_public)?;
        let shared_bytes = curve.point_to_bytes(&shared);
        if shared_bytes[0] != 0x04 {
            return Err(ProtocolError::DegenerateKeyAgreement);
        }
        let coord_len = (shared_bytes.len() - 1) / 2;
        let shared_x = &shared_bytes[1..1 + coord_len];

        // Challenge order must not depend on who initiated.
        let (lo, hi) = if chg_x <= chg_y {
            (chg_x, chg_y)
        } else {
            (chg_y, chg_x)
        };
        let mut salt = lo.to_vec();
        salt.extend_from_slice(hi);
        let key = crypto::kdf(shared_x, crypto::LABEL_SESS, &salt, KEY_LEN)?;
        Ok(key.try_into().expect("kdf returned requested length"))
    }

    fn proof_transcript(&self, msg_type: MsgType, flow_step: u8, challenge: &Challenge) -> Vec<u8> {
        let mut t = transcript_mac_header(msg_type, &SessionId::ZERO, flow_step).to_vec();
        t.extend_from_slice(self.transcript.as_ref().expect("set before any proof"));
        t.extend_from_slice(challenge);
        t
    }

    fn key_proof(
        &self,
        key: &[u8; KEY_LEN],
        msg_type: MsgType,
        flow_step: u8,
        challenge: &Challenge,
    ) -> [u8; 32] {
        crypto::mac(key, &self.proof_transcript(msg_type, flow_step, challenge))
    }

    /// Seals an application payload under keys derived from the session
    /// key. Returns the serialized envelope.
    pub fn seal_app<R: TryCryptoRng + ?Sized>(
        &self,
        rng: &mut R,
        plaintext: &[u8],
    ) -> Result<Vec<u8>, ProtocolError> {
        let (key_enc, key_mac) = self.app_keys()?;
        let sealed = crypto::seal(&key_enc, &key_mac, rng, APP_HEADER, plaintext)?;
        Ok(sealed.to_bytes())
    }

    /// Opens a sealed application payload from the peer.
    pub fn open_app(&self, blob: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        let (key_enc, key_mac) = self.app_keys()?;
        let sealed = crypto::SealedMessage::from_bytes(blob)?;
        Ok(crypto::open(&key_enc, &key_mac, APP_HEADER, &sealed)?)
    }

    fn app_keys(&self) -> Result<([u8; KEY_LEN], [u8; KEY_LEN]), ProtocolError> {
        let key = self.session_key().ok_or(ProtocolError::WrongStatus)?;
        let enc = crypto::kdf(key, crypto::LABEL_ENC, APP_SALT, KEY_LEN)?;
        let mac = crypto::kdf(key, crypto::LABEL_MAC, APP_SALT, KEY_LEN)?;
        Ok((
            enc.try_into().expect("kdf returned requested length"),
            mac.try_into().expect("kdf returned requested length"),
        ))
    }

    fn curve(&self) -> &'static CurveParams {
        curve_for(self.algorithm_id).expect("credential carried a registered algorithm")
    }
}

impl std::fmt::Debug for SessionContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let state = match self.state {
            SessState::InitSentHello => "init-sent-hello",
            SessState::RespAwaitHello => "resp-await-hello",
            SessState::RespSentChallenge { .. } => "resp-sent-challenge",
            SessState::InitSentResponse { .. } => "init-sent-response",
            SessState::Established { .. } => "established",
            SessState::Failed => "failed",
        };
        f.debug_struct("SessionContext")
            .field("device_id", &self.device_id)
            .field("state", &state)
            .finish_non_exhaustive()
    }
}

/// Runs the whole four-message handshake in memory and returns both
/// established contexts (initiator first).
pub fn establish_session<R: TryCryptoRng + ?Sized>(
    initiator: &Credential,
    responder: &Credential,
    now: u64,
    rng: &mut R,
) -> Result<(SessionContext, SessionContext), ProtocolError> {
    let (mut a, hello) = SessionContext::initiate(initiator)?;
    let mut b = SessionContext::respond(responder)?;
    let challenge = b.handle_frame(&hello, now, rng)?;
    let response = a.handle_frame(&challenge[0], now, rng)?;
    let confirm = b.handle_frame(&response[0], now, rng)?;
    let done = a.handle_frame(&confirm[0], now, rng)?;
    debug_assert!(done.is_empty());
    debug_assert!(a.is_established() && b.is_established());
    Ok((a, b))
}
