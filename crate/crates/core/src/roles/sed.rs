//! The Secure Edge Device: authenticator and certificate authority.
//!
//! The SED keeps the device ledger, runs the challenge–response protocol
//! against provisioned devices, ratchets the shared keys forward after
//! every successful cycle, and issues implicit certificates to
//! authenticated devices.
//!
//! ## Ratchet commit discipline
//!
//! The SED prepares next-epoch keys when it verifies an `AuthResponse`,
//! but commits them — to memory and ledger — only when the device proves
//! it holds them, via `AuthConfirm` or an immediately following
//! `CertRequest` under the new session. Until then the old epoch stays
//! live, so an aborted cycle (lost or tampered `AuthConfig`) leaves both
//! sides on the epoch they started with, and the stored config frame is
//! re-sent if the device asks again. After a bounded number of re-sends
//! the pending cycle is discarded and a fresh challenge is issued.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use rand::TryCryptoRng;

use crate::cert::{CertMeta, Certificate};
use crate::crypto::{
    self, fresh_challenge, fresh_nonce, verify_nonce_sum, AuthKeySet, Challenge, Nonce,
};
use crate::ec::{curve_for, AlgorithmId, CurveParams, Point};
use crate::ecqv::{ca_issue, CaKeyPair};
use crate::error::ProtocolError;
use crate::ids::{DeviceId, SessionId};
use crate::roles::ledger::{LedgerRecord, SedLedger};
use crate::roles::{DeviceStatus, RecertifyTrigger, Role, DEFAULT_CERT_VALIDITY_SECS, FAB_SECRET_LEN};
use crate::wire::{field, transcript_mac_header, ConfigPayload, MsgType, ProtocolMessage};

/// How many times a stored `AuthConfig` is re-sent before the pending
/// cycle is rolled back and authentication starts over.
pub const MAX_CONFIG_RESENDS: u8 = 3;

/// Bound on remembered (device, nonce) pairs for replay detection.
const REPLAY_CACHE_CAP: usize = 1024;

/// One provisioned device as the authenticator sees it.
pub struct DeviceEntry {
    role: Role,
    fab_secret: [u8; FAB_SECRET_LEN],
    status: DeviceStatus,
    keys: AuthKeySet,
    session_id: SessionId,
    nonce_transcript: Vec<Nonce>,
    current_cert: Option<Certificate>,
}

impl DeviceEntry {
    fn new(role: Role, fab_secret: [u8; FAB_SECRET_LEN]) -> Self {
        DeviceEntry {
            role,
            status: DeviceStatus::Unauthenticated,
            keys: AuthKeySet::initial(&fab_secret),
            fab_secret,
            session_id: SessionId::ZERO,
            nonce_transcript: Vec::new(),
            current_cert: None,
        }
    }

    pub fn role(&self) -> Role {
        self.role
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

    pub fn current_cert(&self) -> Option<&Certificate> {
        self.current_cert.as_ref()
    }

    /// The ratchet nonces accepted so far, oldest first.
    pub fn nonce_transcript(&self) -> &[Nonce] {
        &self.nonce_transcript
    }

    pub fn keys_fingerprint(&self) -> String {
        crypto::fingerprint(&self.keys.key_auth)
    }

    pub(crate) fn keys(&self) -> &AuthKeySet {
        &self.keys
    }
}

impl std::fmt::Debug for DeviceEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeviceEntry")
            .field("role", &self.role)
            .field("status", &self.status)
            .field("epoch", &self.keys.epoch)
            .field("session_id", &self.session_id)
            .finish_non_exhaustive()
    }
}

struct PendingAuth {
    challenge: Challenge,
    n_sed: Nonce,
}

struct PendingCommit {
    new_keys: AuthKeySet,
    new_session: SessionId,
    config_frame: ProtocolMessage,
    request_nonce: Nonce,
    resends: u8,
}

/// Sliding-window replay filter over (device, nonce) pairs.
struct ReplayCache {
    seen: HashSet<(DeviceId, Nonce)>,
    order: VecDeque<(DeviceId, Nonce)>,
}

impl ReplayCache {
    fn new() -> Self {
        ReplayCache {
            seen: HashSet::new(),
            order: VecDeque::new(),
        }
    }

    fn contains(&self, device_id: DeviceId, nonce: &Nonce) -> bool {
        self.seen.contains(&(device_id, *nonce))
    }

    fn insert(&mut self, device_id: DeviceId, nonce: Nonce) {
        if self.seen.insert((device_id, nonce)) {
            self.order.push_back((device_id, nonce));
            if self.order.len() > REPLAY_CACHE_CAP {
                if let Some(oldest) = self.order.pop_front() {
                    self.seen.remove(&oldest);
                }
            }
        }
    }
}

/// The authenticator / certificate authority node.
pub struct Sed {
    sed_id: DeviceId,
    algorithm_id: AlgorithmId,
    ca: CaKeyPair,
    ratchet_enabled: bool,
    ledger: SedLedger,
    devices: HashMap<DeviceId, DeviceEntry>,
    pending_auth: HashMap<DeviceId, PendingAuth>,
    pending_commit: HashMap<DeviceId, PendingCommit>,
    pending_cert: HashMap<DeviceId, Certificate>,
    replay_cache: ReplayCache,
}

impl Sed {
    /// A fresh authenticator with an in-memory ledger.
    pub fn new<R: TryCryptoRng + ?Sized>(
        sed_id: DeviceId,
        algorithm_id: AlgorithmId,
        ratchet_enabled: bool,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        Self::with_ledger(sed_id, algorithm_id, ratchet_enabled, SedLedger::in_memory(), rng)
    }

    /// A fresh authenticator whose ledger is written to `path`.
    pub fn create_persistent<R: TryCryptoRng + ?Sized>(
        path: &Path,
        sed_id: DeviceId,
        algorithm_id: AlgorithmId,
        ratchet_enabled: bool,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        let ledger = SedLedger::create(path).map_err(storage)?;
        Self::with_ledger(sed_id, algorithm_id, ratchet_enabled, ledger, rng)
    }

    fn with_ledger<R: TryCryptoRng + ?Sized>(
        sed_id: DeviceId,
        algorithm_id: AlgorithmId,
        ratchet_enabled: bool,
        mut ledger: SedLedger,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        let ca = CaKeyPair::generate(algorithm_id, rng)?;
        ledger
            .append(LedgerRecord::CaIdentity {
                algorithm_id,
                sed_id,
                ca_private: ca.private_bytes(),
            })
            .map_err(storage)?;
        Ok(Sed {
            sed_id,
            algorithm_id,
            ca,
            ratchet_enabled,
            ledger,
            devices: HashMap::new(),
            pending_auth: HashMap::new(),
            pending_commit: HashMap::new(),
            pending_cert: HashMap::new(),
            replay_cache: ReplayCache::new(),
        })
    }

    /// Rebuilds the authenticator from a ledger file: device key chains
    /// are recomputed by replaying every ratchet step from each device's
    /// fabrication secret.
    pub fn from_ledger_file(path: &Path, ratchet_enabled: bool) -> Result<Self, ProtocolError> {
        let ledger = SedLedger::load(path).map_err(storage)?;
        let mut records = ledger.records().iter();
        let (algorithm_id, sed_id, ca) = match records.next() {
            Some(LedgerRecord::CaIdentity {
                algorithm_id,
                sed_id,
                ca_private,
            }) => (
                *algorithm_id,
                *sed_id,
                CaKeyPair::from_private_bytes(*algorithm_id, ca_private)?,
            ),
            _ => {
                return Err(ProtocolError::Storage(
                    "ledger does not start with a CA identity record".into(),
                ))
            }
        };
        let mut devices: HashMap<DeviceId, DeviceEntry> = HashMap::new();
        for record in records {
            match record {
                LedgerRecord::CaIdentity { .. } => {
                    return Err(ProtocolError::Storage(
                        "ledger holds more than one CA identity".into(),
                    ))
                }
                LedgerRecord::Provisioned {
                    device_id,
                    role,
                    fab_secret,
                } => {
                    if devices
                        .insert(*device_id, DeviceEntry::new(*role, *fab_secret))
                        .is_some()
                    {
                        return Err(ProtocolError::Storage(format!(
                            "device {device_id} provisioned twice"
                        )));
                    }
                }
                LedgerRecord::Ratcheted { device_id, nonce } => {
                    let entry = known(&mut devices, device_id)?;
                    entry.keys = entry.keys.ratchet(nonce);
                    entry.nonce_transcript.push(*nonce);
                }
                LedgerRecord::SessionAssigned {
                    device_id,
                    session_id,
                } => {
                    known(&mut devices, device_id)?.session_id = *session_id;
                }
                LedgerRecord::StatusChanged { device_id, status } => {
                    known(&mut devices, device_id)?.status = *status;
                }
                LedgerRecord::CertIssued {
                    device_id,
                    cert_bytes,
                } => {
                    known(&mut devices, device_id)?.current_cert =
                        Some(Certificate::decode(cert_bytes)?);
                }
                LedgerRecord::CertSuperseded { device_id } => {
                    known(&mut devices, device_id)?.current_cert = None;
                }
            }
        }
        Ok(Sed {
            sed_id,
            algorithm_id,
            ca,
            ratchet_enabled,
            ledger,
            devices,
            pending_auth: HashMap::new(),
            pending_commit: HashMap::new(),
            pending_cert: HashMap::new(),
            replay_cache: ReplayCache::new(),
        })
    }

    pub fn sed_id(&self) -> DeviceId {
        self.sed_id
    }

    pub fn algorithm_id(&self) -> AlgorithmId {
        self.algorithm_id
    }

    pub fn ca_public(&self) -> &Point {
        self.ca.public()
    }

    pub fn ratchet_enabled(&self) -> bool {
        self.ratchet_enabled
    }

    pub fn ledger(&self) -> &SedLedger {
        &self.ledger
    }

    pub fn device(&self, device_id: DeviceId) -> Option<&DeviceEntry> {
        self.devices.get(&device_id)
    }

    pub fn devices(&self) -> impl Iterator<Item = (&DeviceId, &DeviceEntry)> {
        self.devices.iter()
    }

    pub(crate) fn ca_private_bytes(&self) -> Vec<u8> {
        self.ca.private_bytes()
    }

    /// Audit check: recomputes the device's entire key chain from its
    /// recorded fabrication secret and ratchet nonces, and compares it to
    /// the live keys. `None` if the device is unknown.
    pub fn verify_key_chain(&self, device_id: DeviceId) -> Option<bool> {
        let entry = self.devices.get(&device_id)?;
        let mut keys = AuthKeySet::initial(&entry.fab_secret);
        for nonce in &entry.nonce_transcript {
            keys = keys.ratchet(nonce);
        }
        Some(keys == entry.keys)
    }

    /// Registers a new device and its fabrication secret.
    pub fn register_device(
        &mut self,
        device_id: DeviceId,
        role: Role,
        fab_secret: [u8; FAB_SECRET_LEN],
    ) -> Result<(), ProtocolError> {
        if role == Role::Sed {
            return Err(ProtocolError::Provisioning(
                "the authenticator itself is not a provisionable device",
            ));
        }
        if fab_secret.iter().all(|b| *b == 0) {
            return Err(ProtocolError::Provisioning(
                "fabrication secret must not be all zero",
            ));
        }
        if self.devices.contains_key(&device_id) {
            return Err(ProtocolError::Provisioning("device id already provisioned"));
        }
        self.ledger
            .append(LedgerRecord::Provisioned {
                device_id,
                role,
                fab_secret,
            })
            .map_err(storage)?;
        self.devices
            .insert(device_id, DeviceEntry::new(role, fab_secret));
        Ok(())
    }

    /// Bars a device permanently. Its certificate (if any) stops being
    /// current and every later message from it is rejected.
    pub fn revoke(&mut self, device_id: DeviceId) -> Result<(), ProtocolError> {
        let entry = self
            .devices
            .get_mut(&device_id)
            .ok_or(ProtocolError::UnknownDevice)?;
        if entry.current_cert.is_some() {
            self.ledger
                .append(LedgerRecord::CertSuperseded { device_id })
                .map_err(storage)?;
            entry.current_cert = None;
        }
        self.ledger
            .append(LedgerRecord::StatusChanged {
                device_id,
                status: DeviceStatus::Revoked,
            })
            .map_err(storage)?;
        entry.status = DeviceStatus::Revoked;
        self.pending_auth.remove(&device_id);
        self.pending_commit.remove(&device_id);
        self.pending_cert.remove(&device_id);
        Ok(())
    }

    /// Demotes a device so it must re-enroll. A configuration change
    /// invalidates the authentication itself; the other triggers keep the
    /// shared keys and only turn the certificate.
    pub fn recertify(
        &mut self,
        device_id: DeviceId,
        trigger: RecertifyTrigger,
    ) -> Result<(), ProtocolError> {
        let entry = self
            .devices
            .get_mut(&device_id)
            .ok_or(ProtocolError::UnknownDevice)?;
        if entry.status == DeviceStatus::Revoked {
            return Err(ProtocolError::WrongStatus);
        }
        if entry.current_cert.is_some() {
            self.ledger
                .append(LedgerRecord::CertSuperseded { device_id })
                .map_err(storage)?;
            entry.current_cert = None;
        }
        let status = match trigger {
            RecertifyTrigger::ConfigChange => DeviceStatus::Unauthenticated,
            RecertifyTrigger::FirmwareUpdate
            | RecertifyTrigger::Expiry
            | RecertifyTrigger::Startup => DeviceStatus::Authenticated,
        };
        if entry.status != status {
            self.ledger
                .append(LedgerRecord::StatusChanged { device_id, status })
                .map_err(storage)?;
            entry.status = status;
        }
        Ok(())
    }

    /// Processes one message addressed to the authenticator and returns
    /// the frames to send back. An error means the message was rejected
    /// and nothing is sent.
    pub fn handle_frame<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        match msg.msg_type {
            MsgType::AuthHello => self.on_auth_hello(msg, rng),
            MsgType::AuthResponse => self.on_auth_response(msg, rng),
            MsgType::AuthConfirm => self.on_auth_confirm(msg),
            MsgType::CertRequest => self.on_cert_request(msg, now, rng),
            MsgType::CertAck => self.on_cert_ack(msg),
            _ => Err(ProtocolError::UnexpectedMessage),
        }
    }

    fn entry(&self, device_id: DeviceId) -> Result<&DeviceEntry, ProtocolError> {
        let entry = self
            .devices
            .get(&device_id)
            .ok_or(ProtocolError::UnknownDevice)?;
        if entry.status == DeviceStatus::Revoked {
            return Err(ProtocolError::WrongStatus);
        }
        Ok(entry)
    }

    fn on_auth_hello<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let device_id = msg.require_device_id()?;
        self.entry(device_id)?;

        // A pending, unconfirmed cycle: re-send the stored config frame a
        // bounded number of times, then roll the cycle back (nothing was
        // committed) and start over with a fresh challenge.
        if let Some(pending) = self.pending_commit.get_mut(&device_id) {
            if pending.resends < MAX_CONFIG_RESENDS {
                pending.resends += 1;
                return Ok(vec![pending.config_frame.clone()]);
            }
            self.pending_commit.remove(&device_id);
        }

        let challenge = fresh_challenge(rng)?;
        let n_sed = fresh_nonce(rng)?;
        self.pending_auth
            .insert(device_id, PendingAuth { challenge, n_sed });

        let mut reply = ProtocolMessage::new(MsgType::AuthChallenge, SessionId::ZERO);
        reply.set(field::DEVICE_ID, device_id.as_bytes())?;
        reply.set(field::CHALLENGE, &challenge)?;
        reply.set(field::NONCE, &n_sed)?;
        Ok(vec![reply])
    }

    fn on_auth_response<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let device_id = msg.require_device_id()?;
        self.entry(device_id)?;
        let pending = self
            .pending_auth
            .get(&device_id)
            .ok_or(ProtocolError::UnexpectedMessage)?;

        let sealed = crypto::SealedMessage::from_bytes(msg.require(field::SEALED)?)?;
        let header = transcript_mac_header(MsgType::AuthResponse, &SessionId::ZERO, 3);
        let entry = self.devices.get(&device_id).expect("checked above");
        let plaintext = entry.keys.open(&header, &sealed)?;
        if plaintext.len() != 64 {
            return Err(crate::error::CryptoError::MalformedMessage.into());
        }
        let echoed_challenge: Challenge = plaintext[0..16].try_into().expect("16-byte slice");
        let echoed_n_sed: Nonce = plaintext[16..32].try_into().expect("16-byte slice");
        let n_bms: Nonce = plaintext[32..48].try_into().expect("16-byte slice");
        let n_sum: Nonce = plaintext[48..64].try_into().expect("16-byte slice");

        if echoed_challenge != pending.challenge || echoed_n_sed != pending.n_sed {
            return Err(ProtocolError::ChallengeMismatch);
        }
        if self.replay_cache.contains(device_id, &n_bms) {
            return Err(ProtocolError::Replay);
        }
        if !verify_nonce_sum(&pending.n_sed, &n_bms, &n_sum) {
            return Err(ProtocolError::NonceSumMismatch);
        }

        self.replay_cache.insert(device_id, n_bms);
        self.pending_auth.remove(&device_id);

        let entry = self.devices.get(&device_id).expect("checked above");
        let new_keys = if self.ratchet_enabled {
            entry.keys.ratchet(&n_bms)
        } else {
            entry.keys.clone()
        };
        let new_session = SessionId::random(rng)?;
        let config = ConfigPayload {
            session_id: new_session,
            algorithm_id: self.algorithm_id,
            sed_public_key: self.ca.public().clone(),
            sed_id: self.sed_id,
        };
        // Sealed under the *current* epoch — the device can open it before
        // ratcheting, and proves the ratchet worked via AuthConfirm.
        let sealed_config = entry.keys.seal(
            rng,
            &transcript_mac_header(MsgType::AuthConfig, &SessionId::ZERO, 4),
            &config.encode()?,
        )?;
        let mut reply = ProtocolMessage::new(MsgType::AuthConfig, SessionId::ZERO);
        reply.set(field::DEVICE_ID, device_id.as_bytes())?;
        reply.set(field::SEALED, &sealed_config.to_bytes())?;

        self.pending_commit.insert(
            device_id,
            PendingCommit {
                new_keys,
                new_session,
                config_frame: reply.clone(),
                request_nonce: n_bms,
                resends: 0,
            },
        );
        Ok(vec![reply])
    }

    /// The tag every `AuthConfirm` must carry: keyed by the *new* MAC key,
    /// over the new session, epoch, and the ratchet nonce.
    fn confirm_transcript(
        device_id: DeviceId,
        session_id: &SessionId,
        epoch: u64,
        request_nonce: &Nonce,
    ) -> Vec<u8> {
        let mut t = transcript_mac_header(MsgType::AuthConfirm, session_id, 5).to_vec();
        t.extend_from_slice(device_id.as_bytes());
        t.extend_from_slice(&epoch.to_be_bytes());
        t.extend_from_slice(request_nonce);
        t
    }

    fn on_auth_confirm(&mut self, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let device_id = msg.require_device_id()?;
        self.entry(device_id)?;
        let pending = self
            .pending_commit
            .get(&device_id)
            .ok_or(ProtocolError::UnexpectedMessage)?;

        let tag = msg.require_array::<32>(field::TAG)?;
        let transcript = Self::confirm_transcript(
            device_id,
            &msg.session_id,
            pending.new_keys.epoch,
            &pending.request_nonce,
        );
        if !crypto::verify_mac(&pending.new_keys.key_mac, &transcript, &tag) {
            return Err(ProtocolError::Crypto(
                crate::error::CryptoError::AuthenticationFailure,
            ));
        }
        if msg.session_id != pending.new_session {
            return Err(ProtocolError::UnknownSession);
        }
        self.commit_pending(device_id)?;
        Ok(Vec::new())
    }

    /// Applies a verified pending cycle: ratchet, session, status, ledger.
    fn commit_pending(&mut self, device_id: DeviceId) -> Result<(), ProtocolError> {
        let pending = self
            .pending_commit
            .remove(&device_id)
            .ok_or(ProtocolError::UnexpectedMessage)?;
        let entry = self
            .devices
            .get_mut(&device_id)
            .ok_or(ProtocolError::UnknownDevice)?;
        if self.ratchet_enabled {
            self.ledger
                .append(LedgerRecord::Ratcheted {
                    device_id,
                    nonce: pending.request_nonce,
                })
                .map_err(storage)?;
            entry.nonce_transcript.push(pending.request_nonce);
        }
        self.ledger
            .append(LedgerRecord::SessionAssigned {
                device_id,
                session_id: pending.new_session,
            })
            .map_err(storage)?;
        entry.keys = pending.new_keys;
        entry.session_id = pending.new_session;
        // A certified device that merely refreshed its authentication keeps
        // its standing; anything below that rises to Authenticated.
        if entry.status != DeviceStatus::Certified
            && entry.status != DeviceStatus::Authenticated
        {
            self.ledger
                .append(LedgerRecord::StatusChanged {
                    device_id,
                    status: DeviceStatus::Authenticated,
                })
                .map_err(storage)?;
            entry.status = DeviceStatus::Authenticated;
        }
        Ok(())
    }

    fn on_cert_request<R: TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let device_id = msg.require_device_id()?;
        self.entry(device_id)?;

        let point_bytes = msg.require(field::POINT)?;
        let nonce: Nonce = msg.require_array::<16>(field::NONCE)?;
        let tag = msg.require_array::<32>(field::TAG)?;
        let transcript = {
            let mut t = transcript_mac_header(MsgType::CertRequest, &msg.session_id, 1).to_vec();
            t.extend_from_slice(device_id.as_bytes());
            t.extend_from_slice(point_bytes);
            t.extend_from_slice(&nonce);
            t
        };

        // A certificate request under the pending session is the device's
        // proof that it ratcheted: verify it under the new keys, then
        // commit, then continue as a normal request.
        if let Some(pending) = self.pending_commit.get(&device_id) {
            if pending.new_session == msg.session_id {
                if !crypto::verify_mac(&pending.new_keys.key_mac, &transcript, &tag) {
                    return Err(ProtocolError::Crypto(
                        crate::error::CryptoError::AuthenticationFailure,
                    ));
                }
                self.commit_pending(device_id)?;
            }
        }

        let entry = self.devices.get(&device_id).expect("checked above");
        if !crypto::verify_mac(&entry.keys.key_mac, &transcript, &tag) {
            return Err(ProtocolError::Crypto(
                crate::error::CryptoError::AuthenticationFailure,
            ));
        }
        if msg.session_id != entry.session_id {
            return Err(ProtocolError::UnknownSession);
        }
        if entry.status != DeviceStatus::Authenticated && entry.status != DeviceStatus::Certified {
            return Err(ProtocolError::WrongStatus);
        }
        if self.replay_cache.contains(device_id, &nonce) {
            return Err(ProtocolError::Replay);
        }

        let curve = self.curve();
        let request_point = curve.point_from_bytes(point_bytes)?;
        let meta = CertMeta {
            algorithm_id: self.algorithm_id,
            issuer_id: self.sed_id,
            subject_id: device_id,
            valid_from: now,
            valid_to: now + DEFAULT_CERT_VALIDITY_SECS,
        };
        let (contribution, certificate) = ca_issue(
            &self.ca,
            entry.session_id,
            &meta,
            &request_point,
            rng,
        )?;
        self.replay_cache.insert(device_id, nonce);

        let cert_bytes = certificate.encode()?;
        let s_bytes = contribution.to_bytes(self.algorithm_id)?;
        let response_transcript = {
            let mut t =
                transcript_mac_header(MsgType::CertResponse, &entry.session_id, 2).to_vec();
            t.extend_from_slice(&cert_bytes);
            t.extend_from_slice(&s_bytes);
            t.extend_from_slice(&nonce);
            t
        };
        let response_tag = crypto::mac(&entry.keys.key_mac, &response_transcript);

        let mut reply = ProtocolMessage::new(MsgType::CertResponse, entry.session_id);
        reply.set(field::CERT, &cert_bytes)?;
        reply.set(field::SCALAR, &s_bytes)?;
        reply.set(field::NONCE, &nonce)?;
        reply.set(field::TAG, &response_tag)?;

        self.pending_cert.insert(device_id, certificate);
        Ok(vec![reply])
    }

    fn on_cert_ack(&mut self, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let device_id = msg.require_device_id()?;
        self.entry(device_id)?;
        let pending = self
            .pending_cert
            .get(&device_id)
            .ok_or(ProtocolError::UnexpectedMessage)?;

        let cert_bytes = pending.encode()?;
        let tag = msg.require_array::<32>(field::TAG)?;
        let transcript = {
            let mut t = transcript_mac_header(MsgType::CertAck, &msg.session_id, 3).to_vec();
            t.extend_from_slice(device_id.as_bytes());
            t.extend_from_slice(&crypto::hash(&cert_bytes));
            t
        };
        let entry = self.devices.get(&device_id).expect("checked above");
        if !crypto::verify_mac(&entry.keys.key_mac, &transcript, &tag) {
            return Err(ProtocolError::Crypto(
                crate::error::CryptoError::AuthenticationFailure,
            ));
        }
        if msg.session_id != entry.session_id {
            return Err(ProtocolError::UnknownSession);
        }

        let certificate = self.pending_cert.remove(&device_id).expect("checked above");
        let entry = self.devices.get_mut(&device_id).expect("checked above");
        if entry.current_cert.is_some() {
            self.ledger
                .append(LedgerRecord::CertSuperseded { device_id })
                .map_err(storage)?;
        }
        self.ledger
            .append(LedgerRecord::CertIssued {
                device_id,
                cert_bytes,
            })
            .map_err(storage)?;
        entry.current_cert = Some(certificate);
        if entry.status != DeviceStatus::Certified {
            self.ledger
                .append(LedgerRecord::StatusChanged {
                    device_id,
                    status: DeviceStatus::Certified,
                })
                .map_err(storage)?;
            entry.status = DeviceStatus::Certified;
        }
        Ok(Vec::new())
    }

    fn curve(&self) -> &'static CurveParams {
        curve_for(self.algorithm_id).expect("constructor validated the algorithm")
    }
}

fn storage(e: std::io::Error) -> ProtocolError {
    ProtocolError::Storage(e.to_string())
}

fn known<'a>(
    devices: &'a mut HashMap<DeviceId, DeviceEntry>,
    device_id: &DeviceId,
) -> Result<&'a mut DeviceEntry, ProtocolError> {
    devices.get_mut(device_id).ok_or_else(|| {
        ProtocolError::Storage(format!("ledger references unprovisioned device {device_id}"))
    })
}
