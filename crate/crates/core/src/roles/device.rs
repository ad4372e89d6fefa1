//! The supplicant state machine shared by battery management systems and
//! control units.
//!
//! A device starts with nothing but its fabrication secret. It
//! authenticates to the SED (challenge–response under the epoch-0 keys),
//! ratchets its keys in lockstep with the authenticator, learns the CA
//! public key from the sealed configuration, and then enrolls for an
//! implicit certificate it can use for peer sessions.
//!
//! The device commits its ratchet the moment it opens a valid
//! `AuthConfig` — unlike the SED, it has nothing further to wait for; its
//! own `AuthConfirm` is what releases the SED's half. It keeps the
//! previous epoch around just long enough to answer a re-sent
//! `AuthConfig` if that confirmation got lost.

use rand::TryCryptoRng;

use crate::cert::Certificate;
use crate::crypto::{self, fresh_nonce, nonce_sum, AuthKeySet, Challenge, Nonce};
use crate::ec::curve_for;
use crate::ecqv::{reconstruct_own_keys, CertRequestSecret, PrivateKeyContribution};
use crate::error::{CryptoError, ProtocolError};
use crate::ids::{DeviceId, SessionId};
use crate::roles::{Credential, DeviceIdentity, DeviceStatus};
use crate::wire::{field, transcript_mac_header, ConfigPayload, MsgType, ProtocolMessage};

enum AuthState {
    Idle,
    AwaitChallenge,
    AwaitConfig { n_bms: Nonce },
}

/// The previous epoch, kept to answer a duplicated `AuthConfig` when the
/// authenticator did not receive our confirmation.
struct LastCommit {
    old_keys: AuthKeySet,
    n_bms: Nonce,
}

struct CertPending {
    secret: CertRequestSecret,
    nonce: Nonce,
}

/// A supplicant device.
pub struct Device {
    identity: DeviceIdentity,
    ratchet_enabled: bool,
    keys: AuthKeySet,
    session_id: SessionId,
    config: Option<ConfigPayload>,
    status: DeviceStatus,
    auth_state: AuthState,
    last_commit: Option<LastCommit>,
    cert_pending: Option<CertPending>,
    credential: Option<Credential>,
}

impl Device {
    pub fn new(identity: DeviceIdentity, ratchet_enabled: bool) -> Self {
        let keys = AuthKeySet::initial(identity.fab_secret());
        Device {
            identity,
            ratchet_enabled,
            keys,
            session_id: SessionId::ZERO,
            config: None,
            status: DeviceStatus::Unauthenticated,
            auth_state: AuthState::Idle,
            last_commit: None,
            cert_pending: None,
            credential: None,
        }
    }

    pub fn device_id(&self) -> DeviceId {
        self.identity.device_id
    }

    pub fn status(&self) -> DeviceStatus {
        self.status
    }

    pub fn epoch(&self) -> u64 {
        self.keys.epoch
    }

    pub fn session_id(&self) -> SessionId {
        self.session_id
    }

    pub fn config(&self) -> Option<&ConfigPayload> {
        self.config.as_ref()
    }

    /// The certificate-backed credential, once enrolled.
    pub fn credential(&self) -> Option<&Credential> {
        self.credential.as_ref()
    }

    pub fn keys_fingerprint(&self) -> String {
        crypto::fingerprint(&self.keys.key_auth)
    }

    pub(crate) fn keys(&self) -> &AuthKeySet {
        &self.keys
    }

    /// Secret scalar of an in-flight certificate request, for the in-crate
    /// test harness's wire-leak scanner.
    pub(crate) fn pending_cert_secret(&self) -> Option<Vec<u8>> {
        self.cert_pending.as_ref().map(|p| p.secret.private_bytes())
    }

    /// Begins (or restarts) an authentication cycle.
    pub fn start_auth(&mut self) -> Result<ProtocolMessage, ProtocolError> {
        self.auth_state = AuthState::AwaitChallenge;
        let mut msg = ProtocolMessage::new(MsgType::AuthHello, SessionId::ZERO);
        msg.set(field::DEVICE_ID, self.identity.device_id.as_bytes())?;
        Ok(msg)
    }

    /// Begins certificate enrollment; requires a completed authentication
    /// (the device must know its session and the CA identity).
    pub fn start_cert<R: TryCryptoRng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<ProtocolMessage, ProtocolError> {
        let config = self.config.as_ref().ok_or(ProtocolError::WrongStatus)?;
        let secret = CertRequestSecret::generate(config.algorithm_id, rng)?;
        let nonce = fresh_nonce(rng)?;
        let curve = curve_for(config.algorithm_id).expect("config decode validated this");
        let point_bytes = curve.point_to_bytes(secret.request_point());

        let mut transcript =
            transcript_mac_header(MsgType::CertRequest, &self.session_id, 1).to_vec();
        transcript.extend_from_slice(self.identity.device_id.as_bytes());
        transcript.extend_from_slice(&point_bytes);
        transcript.extend_from_slice(&nonce);
        let tag = crypto::mac(&self.keys.key_mac, &transcript);

        let mut msg = ProtocolMessage::new(MsgType::CertRequest, self.session_id);
        msg.set(field::DEVICE_ID, self.identity.device_id.as_bytes())?;
        msg.set(field::POINT, &point_bytes)?;
        msg.set(field::NONCE, &nonce)?;
        msg.set(field::TAG, &tag)?;

        self.cert_pending = Some(CertPending { secret, nonce });
        Ok(msg)
    }

    /// Processes one message addressed to this device.
    pub fn handle_frame<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        match msg.msg_type {
            MsgType::AuthChallenge => self.on_auth_challenge(msg, rng),
            MsgType::AuthConfig => self.on_auth_config(msg),
            MsgType::CertResponse => self.on_cert_response(msg, now),
            _ => Err(ProtocolError::UnexpectedMessage),
        }
    }

    fn on_auth_challenge<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        if !matches!(self.auth_state, AuthState::AwaitChallenge) {
            return Err(ProtocolError::UnexpectedMessage);
        }
        if msg.require_device_id()? != self.identity.device_id {
            return Err(ProtocolError::UnknownDevice);
        }
        let challenge: Challenge = msg.require_array::<16>(field::CHALLENGE)?;
        let n_sed: Nonce = msg.require_array::<16>(field::NONCE)?;
        let n_bms = fresh_nonce(rng)?;
        let n_sum = nonce_sum(&n_sed, &n_bms);

        let mut plaintext = Vec::with_capacity(64);
        plaintext.extend_from_slice(&challenge);
        plaintext.extend_from_slice(&n_sed);
        plaintext.extend_from_slice(&n_bms);
        plaintext.extend_from_slice(&n_sum);

        let sealed = self.keys.seal(
            rng,
            &transcript_mac_header(MsgType::AuthResponse, &SessionId::ZERO, 3),
            &plaintext,
        )?;
        let mut reply = ProtocolMessage::new(MsgType::AuthResponse, SessionId::ZERO);
        reply.set(field::DEVICE_ID, self.identity.device_id.as_bytes())?;
        reply.set(field::SEALED, &sealed.to_bytes())?;

        self.auth_state = AuthState::AwaitConfig { n_bms };
        Ok(vec![reply])
    }

    fn on_auth_config(&mut self, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let sealed = crypto::SealedMessage::from_bytes(msg.require(field::SEALED)?)?;
        let header = transcript_mac_header(MsgType::AuthConfig, &SessionId::ZERO, 4);

        match &self.auth_state {
            AuthState::AwaitConfig { n_bms } => {
                let n_bms = *n_bms;
                // Any failure from here leaves the current epoch untouched;
                // the cycle is simply abandoned.
                let plaintext = match self.keys.open(&header, &sealed) {
                    Ok(p) => p,
                    Err(e) => {
                        self.auth_state = AuthState::Idle;
                        return Err(e.into());
                    }
                };
                let config = match ConfigPayload::decode(&plaintext) {
                    Ok(c) if !c.session_id.is_zero() => c,
                    Ok(_) => {
                        self.auth_state = AuthState::Idle;
                        return Err(ProtocolError::BadConfig);
                    }
                    Err(e) => {
                        self.auth_state = AuthState::Idle;
                        return Err(e);
                    }
                };

                let new_keys = if self.ratchet_enabled {
                    self.keys.ratchet(&n_bms)
                } else {
                    self.keys.clone()
                };
                self.last_commit = Some(LastCommit {
                    old_keys: std::mem::replace(&mut self.keys, new_keys),
                    n_bms,
                });
                self.session_id = config.session_id;
                self.config = Some(config);
                if self.status == DeviceStatus::Unauthenticated {
                    self.status = DeviceStatus::Authenticated;
                }
                self.auth_state = AuthState::Idle;
                Ok(vec![self.build_confirm(n_bms)?])
            }
            _ => {
                // Not mid-cycle: this may be a duplicate of the last config
                // we already applied, re-sent because our confirmation was
                // lost. Prove it by opening it with the previous epoch's
                // keys and re-issue the same confirmation.
                let last = self
                    .last_commit
                    .as_ref()
                    .ok_or(ProtocolError::UnexpectedMessage)?;
                let plaintext = last.old_keys.open(&header, &sealed)?;
                let config = ConfigPayload::decode(&plaintext)?;
                if config.session_id != self.session_id {
                    return Err(ProtocolError::UnexpectedMessage);
                }
                let n_bms = last.n_bms;
                Ok(vec![self.build_confirm(n_bms)?])
            }
        }
    }

    fn build_confirm(&self, n_bms: Nonce) -> Result<ProtocolMessage, ProtocolError> {
        let mut transcript =
            transcript_mac_header(MsgType::AuthConfirm, &self.session_id, 5).to_vec();
        transcript.extend_from_slice(self.identity.device_id.as_bytes());
        transcript.extend_from_slice(&self.keys.epoch.to_be_bytes());
        transcript.extend_from_slice(&n_bms);
        let tag = crypto::mac(&self.keys.key_mac, &transcript);
        let mut msg = ProtocolMessage::new(MsgType::AuthConfirm, self.session_id);
        msg.set(field::DEVICE_ID, self.identity.device_id.as_bytes())?;
        msg.set(field::TAG, &tag)?;
        Ok(msg)
    }

    fn on_cert_response(
        &mut self,
        msg: &ProtocolMessage,
        now: u64,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let pending = self
            .cert_pending
            .as_ref()
            .ok_or(ProtocolError::UnexpectedMessage)?;
        let config = self.config.as_ref().ok_or(ProtocolError::WrongStatus)?;

        let cert_bytes = msg.require(field::CERT)?;
        let s_bytes = msg.require(field::SCALAR)?;
        let echo: Nonce = msg.require_array::<16>(field::NONCE)?;
        let tag = msg.require_array::<32>(field::TAG)?;

        let mut transcript =
            transcript_mac_header(MsgType::CertResponse, &msg.session_id, 2).to_vec();
        transcript.extend_from_slice(cert_bytes);
        transcript.extend_from_slice(s_bytes);
        transcript.extend_from_slice(&echo);
        if !crypto::verify_mac(&self.keys.key_mac, &transcript, &tag) {
            return Err(CryptoError::AuthenticationFailure.into());
        }
        if msg.session_id != self.session_id {
            return Err(ProtocolError::UnknownSession);
        }
        if echo != pending.nonce {
            return Err(ProtocolError::ChallengeMismatch);
        }

        let certificate = Certificate::decode(cert_bytes)?;
        if certificate.session_id != self.session_id {
            return Err(ProtocolError::UnknownSession);
        }
        if certificate.meta.subject_id != self.identity.device_id
            || certificate.meta.issuer_id != config.sed_id
            || certificate.meta.algorithm_id != config.algorithm_id
        {
            return Err(ProtocolError::BadConfig);
        }
        if !certificate.is_valid_at(now) {
            return Err(ProtocolError::Expired);
        }

        let contribution = PrivateKeyContribution::from_bytes(config.algorithm_id, s_bytes)?;
        let pending = self.cert_pending.take().expect("checked above");
        let keys = reconstruct_own_keys(
            &pending.secret,
            &contribution,
            &certificate,
            &config.sed_public_key,
        )?;

        let mut ack_transcript =
            transcript_mac_header(MsgType::CertAck, &self.session_id, 3).to_vec();
        ack_transcript.extend_from_slice(self.identity.device_id.as_bytes());
        ack_transcript.extend_from_slice(&crypto::hash(cert_bytes));
        let ack_tag = crypto::mac(&self.keys.key_mac, &ack_transcript);
        let mut ack = ProtocolMessage::new(MsgType::CertAck, self.session_id);
        ack.set(field::DEVICE_ID, self.identity.device_id.as_bytes())?;
        ack.set(field::TAG, &ack_tag)?;

        self.credential = Some(Credential {
            device_id: self.identity.device_id,
            certificate,
            keys,
            ca_public: config.sed_public_key.clone(),
        });
        self.status = DeviceStatus::Certified;
        Ok(vec![ack])
    }
}

impl std::fmt::Debug for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Device")
            .field("identity", &self.identity)
            .field("status", &self.status)
            .field("epoch", &self.keys.epoch)
            .field("session_id", &self.session_id)
            .finish_non_exhaustive()
    }
}
