//! Deterministic single-threaded network simulator.
//!
//! A [`Scenario`] describes a small industrial network — one SED, a few
//! supplicant devices — plus a list of missions to run (authentication
//! cycles, certificate enrollments, peer sessions) and a scripted
//! man-in-the-middle ([`adversary`]). [`run_scenario`] executes it and
//! reports, per mission, whether the protocol completed, stalled, or was
//! rejected — and by whom, with which error.
//!
//! Everything is driven by one seeded RNG and a logical tick clock, so a
//! scenario replays bit-for-bit: same seed, same frames, same outcomes.
//! The full wire transcript is kept and scanned afterwards for any secret
//! that should never have appeared in cleartext.

pub mod adversary;
pub mod bench;
pub mod threats;

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::{self, AuthKeySet, Challenge, Nonce, SealedMessage};
use crate::ec::AlgorithmId;
use crate::error::ProtocolError;
use crate::ids::{DeviceId, SessionId};
use crate::roles::device::Device;
use crate::roles::sed::Sed;
use crate::roles::session::SessionContext;
use crate::roles::{DeviceIdentity, DeviceStatus, Role, FAB_SECRET_LEN};
use crate::wire::{field, transcript_mac_header, ConfigPayload, MsgType, ProtocolMessage};

use adversary::{Adversary, AdversaryAction, AdversaryRule, Direction, TamperTarget};

/// Wall-clock origin of the simulation; tick `t` happens at `SIM_EPOCH + t`.
pub const SIM_EPOCH: u64 = 1_700_000_000;

/// Secrets shorter than this are not scanned for: on the tiny test curve
/// private scalars are a single byte and would match everywhere.
const MIN_SECRET_LEN: usize = 16;

/// Hard cap on frames per scenario, against runaway message loops.
const MAX_FRAMES: usize = 10_000;

/// Errors in the scenario itself, as opposed to protocol rejections (which
/// are outcomes, not errors).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("scenario is ill-formed: {0}")]
    IllFormed(String),
    #[error("adversary rule references a frame that was never observed: {0}")]
    SourceUnseen(String),
    #[error("adversary script: {0}")]
    Script(String),
    #[error("simulator bug: {0}")]
    Internal(String),
}

/// A party on the simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Sed,
    Device(DeviceId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Sed => f.write_str("SED"),
            Endpoint::Device(id) => write!(f, "{id}"),
        }
    }
}

/// How one mission ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// The flow ran to its natural end and both sides agree on the result.
    Completed,
    /// One party refused a frame; the error says why.
    RejectedBy { role: Role, error: ProtocolError },
    /// Nobody rejected anything, but the flow never finished (for example
    /// because a frame was dropped).
    Stalled,
}

impl Outcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, Outcome::Completed)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Completed => f.write_str("completed"),
            Outcome::RejectedBy { role, error } => write!(f, "rejected by {role}: {error}"),
            Outcome::Stalled => f.write_str("stalled"),
        }
    }
}

/// One step of a scenario's honest activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mission {
    /// The device runs an authentication cycle against the SED.
    Auth(DeviceId),
    /// Same, but hidden from the adversary: no eavesdropping, no rules.
    /// Models traffic the attacker missed.
    AuthUnobserved(DeviceId),
    /// The device requests an implicit certificate.
    Cert(DeviceId),
    /// Two certified devices establish a peer session (SED offline).
    Session {
        initiator: DeviceId,
        responder: DeviceId,
    },
    /// The attacker, armed with keys stolen earlier (see
    /// [`Scenario::steal_keys_of`]), runs the supplicant side of an
    /// authentication cycle pretending to be this device.
    Impersonate(DeviceId),
}

impl fmt::Display for Mission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mission::Auth(id) => write!(f, "authenticate {id}"),
            Mission::AuthUnobserved(id) => write!(f, "authenticate {id} (unobserved)"),
            Mission::Cert(id) => write!(f, "certify {id}"),
            Mission::Session {
                initiator,
                responder,
            } => write!(f, "session {initiator} <-> {responder}"),
            Mission::Impersonate(id) => write!(f, "impersonate {id} with stolen keys"),
        }
    }
}

/// A device participating in the scenario.
#[derive(Debug, Clone)]
pub struct DeviceSpec {
    pub id: DeviceId,
    pub role: Role,
    /// What the device itself holds.
    pub secret: [u8; FAB_SECRET_LEN],
    /// Whether the SED has a provisioning entry for it at all.
    pub registered: bool,
    /// If set, the SED was provisioned with *this* secret instead — a
    /// counterfeit device whose fabrication secret does not match.
    pub registered_secret: Option<[u8; FAB_SECRET_LEN]>,
}

impl DeviceSpec {
    /// A correctly provisioned device.
    pub fn trusted(id: DeviceId, role: Role, secret: [u8; FAB_SECRET_LEN]) -> Self {
        DeviceSpec {
            id,
            role,
            secret,
            registered: true,
            registered_secret: None,
        }
    }

    /// A device the SED has never heard of.
    pub fn unregistered(id: DeviceId, role: Role, secret: [u8; FAB_SECRET_LEN]) -> Self {
        DeviceSpec {
            registered: false,
            ..Self::trusted(id, role, secret)
        }
    }

    /// A counterfeit: the SED knows the id but holds a different secret.
    pub fn counterfeit(
        id: DeviceId,
        role: Role,
        device_secret: [u8; FAB_SECRET_LEN],
        registered_secret: [u8; FAB_SECRET_LEN],
    ) -> Self {
        DeviceSpec {
            registered_secret: Some(registered_secret),
            ..Self::trusted(id, role, device_secret)
        }
    }
}

/// A complete, self-contained experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub algorithm: AlgorithmId,
    pub ratchet_enabled: bool,
    pub seed: u64,
    pub devices: Vec<DeviceSpec>,
    pub missions: Vec<Mission>,
    pub rules: Vec<AdversaryRule>,
    /// Snapshot this device's symmetric keys *at provisioning time* and
    /// hand them to the attacker, for key-compromise missions.
    pub steal_keys_of: Option<DeviceId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissionReport {
    pub mission: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioReport {
    pub name: String,
    pub outcomes: Vec<MissionReport>,
    /// Secrets found verbatim in the wire transcript. Must be empty.
    pub leaks: Vec<String>,
    /// Human-readable trace of everything that happened.
    pub events: Vec<String>,
    /// Rules that never matched a frame — usually a script/mission mismatch.
    pub unfired_rules: usize,
    /// Digest of the transcript and outcomes, for determinism checks.
    pub fingerprint: String,
}

impl ScenarioReport {
    pub fn all_completed(&self) -> bool {
        self.outcomes.iter().all(|m| m.outcome.is_completed())
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport, SimError> {
    let mut world = World::build(scenario)?;
    let mut outcomes = Vec::with_capacity(scenario.missions.len());
    for mission in &scenario.missions {
        outcomes.push(world.run_mission(mission)?);
    }
    Ok(world.into_report(scenario.name.clone(), outcomes))
}

// ---------------------------------------------------------------------------
// Internals
// ---------------------------------------------------------------------------

struct Envelope {
    from: Endpoint,
    to: Endpoint,
    bytes: Vec<u8>,
}

struct FrameRecord {
    msg_type: Option<MsgType>,
    bytes: Vec<u8>,
}

/// Best-effort message-type tag for transcript records; garbage stays `None`.
fn sniff_msg_type(bytes: &[u8]) -> Option<MsgType> {
    if bytes.len() >= 4 {
        MsgType::from_byte(bytes[3]).ok()
    } else {
        None
    }
}

/// Labelled secret byte strings that must never appear on the wire.
struct SecretRegistry {
    entries: Vec<(String, Vec<u8>)>,
}

impl SecretRegistry {
    fn new() -> Self {
        SecretRegistry {
            entries: Vec::new(),
        }
    }

    fn add(&mut self, label: impl Into<String>, bytes: &[u8]) {
        if bytes.len() < MIN_SECRET_LEN {
            return;
        }
        if self.entries.iter().any(|(_, b)| b == bytes) {
            return;
        }
        self.entries.push((label.into(), bytes.to_vec()));
    }

    fn scan(&self, frames: &[FrameRecord]) -> Vec<String> {
        let mut findings = Vec::new();
        for (idx, frame) in frames.iter().enumerate() {
            for (label, secret) in &self.entries {
                if frame
                    .bytes
                    .windows(secret.len())
                    .any(|w| w == secret.as_slice())
                {
                    let kind = frame
                        .msg_type
                        .map(MsgType::name)
                        .unwrap_or("unparseable frame");
                    findings.push(format!("{label} appears in frame #{idx} ({kind})"));
                }
            }
        }
        findings
    }
}

/// The supplicant half of an authentication cycle, replayed by an attacker
/// from stolen symmetric keys instead of a fabrication secret.
struct Attacker {
    device_id: DeviceId,
    keys: AuthKeySet,
    ratchet_enabled: bool,
    config_opened: bool,
}

impl Attacker {
    /// Passive phase: watch authentication traffic; whenever the stolen
    /// keys still open a response, learn the ratchet nonce inside it and
    /// step the stolen keys forward in lockstep with the victims.
    fn eavesdrop(&mut self, msg: &ProtocolMessage) {
        if msg.msg_type != MsgType::AuthResponse {
            return;
        }
        let Ok(sealed_bytes) = msg.require(field::SEALED) else {
            return;
        };
        let Ok(sealed) = SealedMessage::from_bytes(sealed_bytes) else {
            return;
        };
        let header = transcript_mac_header(MsgType::AuthResponse, &SessionId::ZERO, 3);
        if let Ok(plaintext) = self.keys.open(&header, &sealed) {
            if plaintext.len() == 64 && self.ratchet_enabled {
                let nonce: Nonce = plaintext[32..48].try_into().expect("length checked");
                self.keys = self.keys.ratchet(&nonce);
            }
        }
    }

    fn hello(&self) -> Result<ProtocolMessage, ProtocolError> {
        let mut msg = ProtocolMessage::new(MsgType::AuthHello, SessionId::ZERO);
        msg.set(field::DEVICE_ID, self.device_id.as_bytes())?;
        Ok(msg)
    }

    fn handle<R: rand::TryCryptoRng + ?Sized>(
        &mut self,
        msg: &ProtocolMessage,
        rng: &mut R,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        match msg.msg_type {
            MsgType::AuthChallenge => {
                let challenge: Challenge = msg.require_array::<16>(field::CHALLENGE)?;
                let n_sed: Nonce = msg.require_array::<16>(field::NONCE)?;
                let n_attacker = crypto::fresh_nonce(rng)?;
                let n_sum = crypto::nonce_sum(&n_sed, &n_attacker);

                let mut plaintext = Vec::with_capacity(64);
                plaintext.extend_from_slice(&challenge);
                plaintext.extend_from_slice(&n_sed);
                plaintext.extend_from_slice(&n_attacker);
                plaintext.extend_from_slice(&n_sum);

                let sealed = self.keys.seal(
                    rng,
                    &transcript_mac_header(MsgType::AuthResponse, &SessionId::ZERO, 3),
                    &plaintext,
                )?;
                let mut reply = ProtocolMessage::new(MsgType::AuthResponse, SessionId::ZERO);
                reply.set(field::DEVICE_ID, self.device_id.as_bytes())?;
                reply.set(field::SEALED, &sealed.to_bytes())?;
                Ok(vec![reply])
            }
            MsgType::AuthConfig => {
                // Receiving a config the stolen keys can open means the
                // SED accepted the impersonation: the attack succeeded.
                let sealed = SealedMessage::from_bytes(msg.require(field::SEALED)?)?;
                let header = transcript_mac_header(MsgType::AuthConfig, &SessionId::ZERO, 4);
                if self.keys.open(&header, &sealed).is_ok() {
                    self.config_opened = true;
                }
                Ok(Vec::new())
            }
            _ => Ok(Vec::new()),
        }
    }
}

struct SessionRun {
    initiator: DeviceId,
    responder: DeviceId,
    init: SessionContext,
    resp: SessionContext,
}

struct World {
    sed: Sed,
    devices: BTreeMap<DeviceId, Device>,
    roles: BTreeMap<DeviceId, Role>,
    attacker: Option<Attacker>,
    session_run: Option<SessionRun>,
    adversary: Adversary,
    queue: BTreeMap<(u64, u64), Envelope>,
    next_seq: u64,
    tick: u64,
    rng: ChaCha20Rng,
    transcript: Vec<FrameRecord>,
    events: Vec<String>,
    secrets: SecretRegistry,
    algorithm: AlgorithmId,
    /// Current mission is invisible to adversary and attacker.
    blind: bool,
    /// During an impersonation mission, frames for this device are handed
    /// to the attacker instead.
    impersonating: Option<DeviceId>,
}

impl World {
    fn build(scenario: &Scenario) -> Result<World, SimError> {
        let mut rng = ChaCha20Rng::seed_from_u64(scenario.seed);
        let sed = Sed::new(
            DeviceId(*b"sed-0001"),
            scenario.algorithm,
            scenario.ratchet_enabled,
            &mut rng,
        )
        .map_err(|e| SimError::Internal(format!("creating SED: {e}")))?;

        let mut world = World {
            sed,
            devices: BTreeMap::new(),
            roles: BTreeMap::new(),
            attacker: None,
            session_run: None,
            adversary: Adversary::new(scenario.rules.clone()),
            queue: BTreeMap::new(),
            next_seq: 0,
            tick: 0,
            rng,
            transcript: Vec::new(),
            events: Vec::new(),
            secrets: SecretRegistry::new(),
            algorithm: scenario.algorithm,
            blind: false,
            impersonating: None,
        };

        for spec in &scenario.devices {
            if world.devices.contains_key(&spec.id) {
                return Err(SimError::IllFormed(format!("duplicate device {}", spec.id)));
            }
            let identity = DeviceIdentity::new(spec.id, spec.role, spec.secret)
                .map_err(|e| SimError::IllFormed(format!("device {}: {e}", spec.id)))?;
            if spec.registered {
                let registered_secret = spec.registered_secret.unwrap_or(spec.secret);
                world
                    .sed
                    .register_device(spec.id, spec.role, registered_secret)
                    .map_err(|e| SimError::IllFormed(format!("registering {}: {e}", spec.id)))?;
                world
                    .secrets
                    .add(format!("registered secret of {}", spec.id), &registered_secret);
            }
            world
                .secrets
                .add(format!("fabrication secret of {}", spec.id), &spec.secret);
            world
                .devices
                .insert(spec.id, Device::new(identity, scenario.ratchet_enabled));
            world.roles.insert(spec.id, spec.role);
        }

        if let Some(victim) = scenario.steal_keys_of {
            let device = world.devices.get(&victim).ok_or_else(|| {
                SimError::IllFormed(format!("cannot steal keys of unknown device {victim}"))
            })?;
            world.events.push(format!(
                "attacker steals the epoch-{} keys of {victim}",
                device.keys().epoch
            ));
            world.attacker = Some(Attacker {
                device_id: victim,
                keys: device.keys().clone(),
                ratchet_enabled: scenario.ratchet_enabled,
                config_opened: false,
            });
        }

        for mission in &scenario.missions {
            let referenced: Vec<DeviceId> = match mission {
                Mission::Auth(id)
                | Mission::AuthUnobserved(id)
                | Mission::Cert(id)
                | Mission::Impersonate(id) => vec![*id],
                Mission::Session {
                    initiator,
                    responder,
                } => {
                    if initiator == responder {
                        return Err(SimError::IllFormed(format!(
                            "session of {initiator} with itself"
                        )));
                    }
                    vec![*initiator, *responder]
                }
            };
            for id in referenced {
                if !world.devices.contains_key(&id) {
                    return Err(SimError::IllFormed(format!(
                        "mission \"{mission}\" references unknown device {id}"
                    )));
                }
            }
            if matches!(mission, Mission::Impersonate(_)) && world.attacker.is_none() {
                return Err(SimError::IllFormed(
                    "impersonation mission without steal_keys_of".into(),
                ));
            }
        }

        world.secrets.add("CA private key", &world.sed.ca_private_bytes());
        world.collect_secrets();
        Ok(world)
    }

    fn now(&self) -> u64 {
        SIM_EPOCH + self.tick
    }

    fn log(&mut self, line: String) {
        self.events.push(line);
    }

    fn run_mission(&mut self, mission: &Mission) -> Result<MissionReport, SimError> {
        self.log(format!("=== mission: {mission}"));
        self.blind = matches!(mission, Mission::AuthUnobserved(_));
        self.impersonating = match mission {
            Mission::Impersonate(id) => Some(*id),
            _ => None,
        };
        self.session_run = None;

        match mission {
            Mission::Auth(id) | Mission::AuthUnobserved(id) => {
                let device = self.devices.get_mut(id).expect("validated at build");
                let hello = device
                    .start_auth()
                    .map_err(|e| SimError::Internal(format!("start_auth: {e}")))?;
                self.send(Endpoint::Device(*id), Endpoint::Sed, &hello)?;
            }
            Mission::Cert(id) => {
                let device = self.devices.get_mut(id).expect("validated at build");
                let request = device.start_cert(&mut self.rng).map_err(|e| {
                    SimError::IllFormed(format!("{id} cannot request a certificate yet: {e}"))
                })?;
                if let Some(secret) = self.devices[id].pending_cert_secret() {
                    self.secrets
                        .add(format!("certificate request secret of {id}"), &secret);
                }
                self.send(Endpoint::Device(*id), Endpoint::Sed, &request)?;
            }
            Mission::Session {
                initiator,
                responder,
            } => {
                let (init, hello) = {
                    let credential =
                        self.devices[initiator].credential().ok_or_else(|| {
                            SimError::IllFormed(format!("{initiator} has no credential"))
                        })?;
                    SessionContext::initiate(credential)
                        .map_err(|e| SimError::Internal(format!("initiate: {e}")))?
                };
                let resp = {
                    let credential =
                        self.devices[responder].credential().ok_or_else(|| {
                            SimError::IllFormed(format!("{responder} has no credential"))
                        })?;
                    SessionContext::respond(credential)
                        .map_err(|e| SimError::Internal(format!("respond: {e}")))?
                };
                self.session_run = Some(SessionRun {
                    initiator: *initiator,
                    responder: *responder,
                    init,
                    resp,
                });
                self.send(Endpoint::Device(*initiator), Endpoint::Device(*responder), &hello)?;
            }
            Mission::Impersonate(id) => {
                let attacker = self.attacker.as_ref().expect("validated at build");
                let hello = attacker
                    .hello()
                    .map_err(|e| SimError::Internal(format!("attacker hello: {e}")))?;
                self.send(Endpoint::Device(*id), Endpoint::Sed, &hello)?;
            }
        }

        let rejection = self.pump()?;
        let outcome = match rejection {
            Some((role, error)) => Outcome::RejectedBy { role, error },
            None => self.evaluate(mission),
        };
        self.log(format!("--- outcome: {outcome}"));
        self.queue.clear();
        self.collect_secrets();
        Ok(MissionReport {
            mission: mission.to_string(),
            outcome,
        })
    }

    /// Puts a frame on the wire: records it, lets the adversary at it,
    /// and queues whatever survives.
    fn send(
        &mut self,
        from: Endpoint,
        to: Endpoint,
        msg: &ProtocolMessage,
    ) -> Result<(), SimError> {
        let bytes = msg
            .frame()
            .map_err(|e| SimError::Internal(format!("framing {}: {e}", msg.msg_type)))?;
        if self.transcript.len() >= MAX_FRAMES {
            return Err(SimError::Internal("frame budget exhausted".into()));
        }
        self.log(format!(
            "tick {}: {from} -> {to}: {} ({} bytes)",
            self.tick,
            msg.msg_type,
            bytes.len()
        ));

        if self.blind {
            self.enqueue(from, to, bytes, 0);
            return Ok(());
        }
        if self.impersonating.is_none() {
            if let Some(attacker) = self.attacker.as_mut() {
                attacker.eavesdrop(msg);
            }
        }
        let direction = match (from, to) {
            (_, Endpoint::Sed) => Direction::ToSed,
            (Endpoint::Sed, _) => Direction::FromSed,
            _ => Direction::Peer,
        };
        match self.adversary.observe(msg.msg_type, direction, &bytes) {
            None => self.enqueue(from, to, bytes, 0),
            Some(action) => self.apply_action(action, from, to, bytes)?,
        }
        Ok(())
    }

    fn apply_action(
        &mut self,
        action: AdversaryAction,
        from: Endpoint,
        to: Endpoint,
        bytes: Vec<u8>,
    ) -> Result<(), SimError> {
        match action {
            AdversaryAction::Drop => {
                // Dropped at the adversary's tap — but its tap saw the
                // bytes, so the transcript (and the leak scan) still must.
                self.record(&bytes);
                self.log(format!("tick {}: adversary drops the frame", self.tick));
            }
            AdversaryAction::Replay(src) => {
                let replayed = self.adversary.recorded(&src)?.to_vec();
                self.log(format!(
                    "tick {}: adversary swaps the frame for a recording of \"{src}\"",
                    self.tick
                ));
                self.enqueue(from, to, replayed, 0);
            }
            AdversaryAction::TamperByte(target) => {
                let mut bytes = bytes;
                let index = match target {
                    TamperTarget::Offset(o) => {
                        if o >= bytes.len() {
                            return Err(SimError::Script(format!(
                                "tamper offset {o} is outside a {}-byte frame",
                                bytes.len()
                            )));
                        }
                        o
                    }
                    TamperTarget::Last => bytes.len() - 1,
                    TamperTarget::Random => {
                        let draw = crypto::fresh_nonce(&mut self.rng)
                            .map_err(|e| SimError::Internal(format!("rng: {e}")))?;
                        (u64::from_be_bytes(draw[..8].try_into().expect("8 bytes"))
                            % bytes.len() as u64) as usize
                    }
                };
                bytes[index] ^= 0x01;
                self.log(format!(
                    "tick {}: adversary flips a bit of byte {index}",
                    self.tick
                ));
                self.enqueue(from, to, bytes, 0);
            }
            AdversaryAction::Splice(src) => {
                let donor = self.adversary.recorded(&src)?;
                if donor.len() < 20 || bytes.len() < 20 {
                    return Err(SimError::Internal("frame too short to splice".into()));
                }
                let mut bytes = bytes;
                bytes[4..20].copy_from_slice(&donor[4..20]);
                self.log(format!(
                    "tick {}: adversary grafts the session header of \"{src}\" onto the frame",
                    self.tick
                ));
                self.enqueue(from, to, bytes, 0);
            }
            AdversaryAction::Inject(extra) => {
                self.log(format!(
                    "tick {}: adversary injects {} raw bytes ahead of the frame",
                    self.tick,
                    extra.len()
                ));
                self.enqueue(from, to, extra, 0);
                self.enqueue(from, to, bytes, 0);
            }
            AdversaryAction::Delay(ticks) => {
                self.log(format!(
                    "tick {}: adversary holds the frame for {ticks} ticks",
                    self.tick
                ));
                self.enqueue(from, to, bytes, ticks);
            }
        }
        Ok(())
    }

    fn enqueue(&mut self, from: Endpoint, to: Endpoint, bytes: Vec<u8>, extra_delay: u64) {
        self.record(&bytes);
        let key = (self.tick + 1 + extra_delay, self.next_seq);
        self.next_seq += 1;
        self.queue.insert(key, Envelope { from, to, bytes });
    }

    /// Appends wire bytes to the transcript the leak scanner will search.
    /// Everything that physically crosses the network goes through here —
    /// honest frames, tampered copies, injected garbage.
    fn record(&mut self, bytes: &[u8]) {
        let msg_type = sniff_msg_type(bytes);
        self.transcript.push(FrameRecord {
            msg_type,
            bytes: bytes.to_vec(),
        });
    }

    /// Delivers queued frames in order until the queue drains or a party
    /// rejects one.
    fn pump(&mut self) -> Result<Option<(Role, ProtocolError)>, SimError> {
        while let Some(((tick, _), envelope)) = self.queue.pop_first() {
            self.tick = tick;
            if let Some(rejection) = self.deliver(envelope)? {
                return Ok(Some(rejection));
            }
        }
        Ok(None)
    }

    fn deliver(&mut self, envelope: Envelope) -> Result<Option<(Role, ProtocolError)>, SimError> {
        let receiver_role = self.role_of(envelope.to);
        let msg = match ProtocolMessage::parse(&envelope.bytes) {
            Ok(m) => m,
            Err(e) => {
                self.log(format!(
                    "tick {}: {} rejects an unparseable frame: {e}",
                    self.tick, envelope.to
                ));
                return Ok(Some((receiver_role, e.into())));
            }
        };

        match envelope.to {
            Endpoint::Sed => {
                let now = self.now();
                let replies = match self.sed.handle_frame(&msg, now, &mut self.rng) {
                    Ok(r) => r,
                    Err(e) => {
                        self.log(format!("tick {}: SED rejects {}: {e}", self.tick, msg.msg_type));
                        return Ok(Some((Role::Sed, e)));
                    }
                };
                for reply in &replies {
                    self.send(Endpoint::Sed, envelope.from, reply)?;
                }
            }
            Endpoint::Device(id) => {
                if self.impersonating == Some(id) {
                    let attacker = self.attacker.as_mut().expect("impersonation validated");
                    let replies = attacker
                        .handle(&msg, &mut self.rng)
                        .map_err(|e| SimError::Internal(format!("attacker: {e}")))?;
                    for reply in &replies {
                        self.send(Endpoint::Device(id), Endpoint::Sed, reply)?;
                    }
                } else if matches!(
                    msg.msg_type,
                    MsgType::SessHello
                        | MsgType::SessChallenge
                        | MsgType::SessResponse
                        | MsgType::SessConfirm
                ) {
                    let now = self.now();
                    let (result, other) = {
                        let run = self.session_run.as_mut().ok_or_else(|| {
                            SimError::Internal(format!("session frame for {id} with no session"))
                        })?;
                        let (ctx, other) = if id == run.initiator {
                            (&mut run.init, run.responder)
                        } else if id == run.responder {
                            (&mut run.resp, run.initiator)
                        } else {
                            return Err(SimError::Internal(format!(
                                "session frame for {id}, who is not in the session"
                            )));
                        };
                        (ctx.handle_frame(&msg, now, &mut self.rng), other)
                    };
                    let replies = match result {
                        Ok(r) => r,
                        Err(e) => {
                            self.log(format!(
                                "tick {}: {id} rejects {}: {e}",
                                self.tick, msg.msg_type
                            ));
                            return Ok(Some((receiver_role, e)));
                        }
                    };
                    for reply in &replies {
                        self.send(Endpoint::Device(id), Endpoint::Device(other), reply)?;
                    }
                } else {
                    let now = self.now();
                    let device = self.devices.get_mut(&id).ok_or_else(|| {
                        SimError::Internal(format!("frame addressed to unknown device {id}"))
                    })?;
                    let replies = match device.handle_frame(&msg, now, &mut self.rng) {
                        Ok(r) => r,
                        Err(e) => {
                            self.log(format!(
                                "tick {}: {id} rejects {}: {e}",
                                self.tick, msg.msg_type
                            ));
                            return Ok(Some((receiver_role, e)));
                        }
                    };
                    for reply in &replies {
                        self.send(Endpoint::Device(id), Endpoint::Sed, reply)?;
                    }
                }
            }
        }
        Ok(None)
    }

    fn role_of(&self, endpoint: Endpoint) -> Role {
        match endpoint {
            Endpoint::Sed => Role::Sed,
            Endpoint::Device(id) => self.roles.get(&id).copied().unwrap_or(Role::Bms),
        }
    }

    /// Judges a mission that ran out of frames without an explicit
    /// rejection: did it actually finish?
    fn evaluate(&mut self, mission: &Mission) -> Outcome {
        match mission {
            Mission::Auth(id) | Mission::AuthUnobserved(id) => {
                let device = &self.devices[id];
                match self.sed.device(*id) {
                    Some(entry)
                        if matches!(
                            device.status(),
                            DeviceStatus::Authenticated | DeviceStatus::Certified
                        ) && !device.session_id().is_zero()
                            && device.session_id() == entry.session_id()
                            && device.epoch() == entry.epoch()
                            && device.keys_fingerprint() == entry.keys_fingerprint() =>
                    {
                        Outcome::Completed
                    }
                    _ => Outcome::Stalled,
                }
            }
            Mission::Cert(id) => {
                let device = &self.devices[id];
                let entry_certified = self
                    .sed
                    .device(*id)
                    .map(|e| e.status() == DeviceStatus::Certified && e.current_cert().is_some())
                    .unwrap_or(false);
                if device.credential().is_some() && entry_certified {
                    Outcome::Completed
                } else {
                    Outcome::Stalled
                }
            }
            Mission::Session { .. } => match &self.session_run {
                Some(run)
                    if run.init.is_established()
                        && run.resp.is_established()
                        && run.init.session_key() == run.resp.session_key() =>
                {
                    Outcome::Completed
                }
                _ => Outcome::Stalled,
            },
            Mission::Impersonate(_) => {
                let attacker = self.attacker.as_ref().expect("validated at build");
                if attacker.config_opened {
                    // The flow "completed" — which here means the defense
                    // failed and the impersonation went through.
                    Outcome::Completed
                } else {
                    Outcome::Stalled
                }
            }
        }
    }

    /// Pulls every secret currently alive in the system into the registry.
    fn collect_secrets(&mut self) {
        for (id, device) in &self.devices {
            let keys = device.keys();
            let epoch = keys.epoch;
            self.secrets
                .add(format!("{id} epoch-{epoch} auth key"), &keys.key_auth);
            self.secrets
                .add(format!("{id} epoch-{epoch} enc key"), &keys.key_enc);
            self.secrets
                .add(format!("{id} epoch-{epoch} mac key"), &keys.key_mac);
            if let Some(credential) = device.credential() {
                self.secrets.add(
                    format!("{id} certified private key"),
                    &credential.keys.private_bytes(),
                );
            }
            if let Some(secret) = device.pending_cert_secret() {
                self.secrets
                    .add(format!("{id} certificate request secret"), &secret);
            }
        }
        let mut sed_side: Vec<(String, Vec<u8>)> = Vec::new();
        for (id, entry) in self.sed.devices() {
            let keys = entry.keys();
            let epoch = keys.epoch;
            sed_side.push((format!("SED copy of {id} epoch-{epoch} auth key"), keys.key_auth.to_vec()));
            sed_side.push((format!("SED copy of {id} epoch-{epoch} enc key"), keys.key_enc.to_vec()));
            sed_side.push((format!("SED copy of {id} epoch-{epoch} mac key"), keys.key_mac.to_vec()));
            if !entry.session_id().is_zero() {
                let payload = ConfigPayload {
                    session_id: entry.session_id(),
                    algorithm_id: self.algorithm,
                    sed_public_key: self.sed.ca_public().clone(),
                    sed_id: self.sed.sed_id(),
                };
                if let Ok(blob) = payload.encode() {
                    sed_side.push((format!("configuration payload for {id}"), blob));
                }
            }
        }
        for (label, bytes) in sed_side {
            self.secrets.add(label, &bytes);
        }
        if let Some(run) = &self.session_run {
            let keys: Vec<(String, Vec<u8>)> = [(&run.init, run.initiator), (&run.resp, run.responder)]
                .iter()
                .filter_map(|(ctx, id)| {
                    ctx.session_key()
                        .map(|k| (format!("session key held by {id}"), k.to_vec()))
                })
                .collect();
            for (label, bytes) in keys {
                self.secrets.add(label, &bytes);
            }
        }
    }

    fn into_report(self, name: String, outcomes: Vec<MissionReport>) -> ScenarioReport {
        let leaks = self.secrets.scan(&self.transcript);
        let mut digest_input = Vec::new();
        for frame in &self.transcript {
            digest_input.extend_from_slice(&(frame.bytes.len() as u32).to_be_bytes());
            digest_input.extend_from_slice(&frame.bytes);
        }
        for outcome in &outcomes {
            digest_input.extend_from_slice(outcome.mission.as_bytes());
            digest_input.extend_from_slice(outcome.outcome.to_string().as_bytes());
        }
        ScenarioReport {
            name,
            outcomes,
            leaks,
            events: self.events,
            unfired_rules: self.adversary.unfired(),
            fingerprint: crypto::fingerprint(&digest_input),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::adversary::parse_script;
    use super::*;
    use crate::ec::algorithm_by_name;

    fn base_scenario(name: &str) -> Scenario {
        Scenario {
            name: name.into(),
            algorithm: algorithm_by_name("toy17").unwrap(),
            ratchet_enabled: true,
            seed: 42,
            devices: vec![
                DeviceSpec::trusted(DeviceId(*b"bms-0001"), Role::Bms, [3; 32]),
                DeviceSpec::trusted(DeviceId(*b"ctrl-001"), Role::ControlUnit, [4; 32]),
            ],
            missions: vec![
                Mission::Auth(DeviceId(*b"bms-0001")),
                Mission::Cert(DeviceId(*b"bms-0001")),
                Mission::Auth(DeviceId(*b"ctrl-001")),
                Mission::Cert(DeviceId(*b"ctrl-001")),
                Mission::Session {
                    initiator: DeviceId(*b"bms-0001"),
                    responder: DeviceId(*b"ctrl-001"),
                },
            ],
            rules: Vec::new(),
            steal_keys_of: None,
        }
    }

    #[test]
    fn an_honest_run_completes_cleanly_and_leaks_nothing() {
        let report = run_scenario(&base_scenario("honest")).unwrap();
        assert!(report.all_completed(), "{:#?}", report.outcomes);
        assert!(report.leaks.is_empty(), "{:?}", report.leaks);
        assert_eq!(report.unfired_rules, 0);
        assert!(!report.events.is_empty());
    }

    #[test]
    fn identical_seeds_replay_identically_and_different_seeds_diverge() {
        let a = run_scenario(&base_scenario("det")).unwrap();
        let b = run_scenario(&base_scenario("det")).unwrap();
        assert_eq!(a, b);

        let mut other = base_scenario("det");
        other.seed = 43;
        let c = run_scenario(&other).unwrap();
        assert_ne!(a.fingerprint, c.fingerprint);
    }

    #[test]
    fn a_dropped_frame_stalls_the_mission_without_a_rejection() {
        let mut scenario = base_scenario("drop");
        scenario.missions = vec![Mission::Auth(DeviceId(*b"bms-0001"))];
        scenario.rules = parse_script("1 from-sed auth-challenge drop").unwrap();
        let report = run_scenario(&scenario).unwrap();
        assert_eq!(report.outcomes[0].outcome, Outcome::Stalled);
        assert_eq!(report.unfired_rules, 0);
    }

    #[test]
    fn a_delayed_frame_still_completes_the_mission() {
        let mut scenario = base_scenario("delay");
        scenario.rules = parse_script("1 from-sed auth-challenge delay 7").unwrap();
        let report = run_scenario(&scenario).unwrap();
        assert!(report.all_completed(), "{:#?}", report.outcomes);
    }

    #[test]
    fn injected_garbage_is_rejected_at_the_parser() {
        let mut scenario = base_scenario("inject");
        scenario.missions = vec![Mission::Auth(DeviceId(*b"bms-0001"))];
        // Valid magic, then junk: the SED's parser must throw it out.
        scenario.rules = parse_script("1 to-sed auth-hello inject b45a01ff00000000").unwrap();
        let report = run_scenario(&scenario).unwrap();
        assert!(matches!(
            &report.outcomes[0].outcome,
            Outcome::RejectedBy {
                role: Role::Sed,
                error: ProtocolError::Wire(_)
            }
        ));
    }

    #[test]
    fn ill_formed_scenarios_are_refused() {
        // Unknown mission device.
        let mut scenario = base_scenario("bad");
        scenario.missions = vec![Mission::Auth(DeviceId(*b"ghost-01"))];
        assert!(matches!(
            run_scenario(&scenario),
            Err(SimError::IllFormed(_))
        ));

        // Impersonation without stolen keys.
        let mut scenario = base_scenario("bad");
        scenario.missions = vec![Mission::Impersonate(DeviceId(*b"bms-0001"))];
        assert!(matches!(
            run_scenario(&scenario),
            Err(SimError::IllFormed(_))
        ));

        // Certificate enrollment before any authentication.
        let mut scenario = base_scenario("bad");
        scenario.missions = vec![Mission::Cert(DeviceId(*b"bms-0001"))];
        assert!(matches!(
            run_scenario(&scenario),
            Err(SimError::IllFormed(_))
        ));

        // Replay of a frame nobody ever sent.
        let mut scenario = base_scenario("bad");
        scenario.missions = vec![Mission::Auth(DeviceId(*b"bms-0001"))];
        scenario.rules =
            parse_script("1 to-sed auth-hello replay 5 peer sess-confirm").unwrap();
        assert!(matches!(
            run_scenario(&scenario),
            Err(SimError::SourceUnseen(_))
        ));
    }

    #[test]
    fn unfired_rules_are_reported() {
        let mut scenario = base_scenario("unfired");
        scenario.rules = parse_script("9 to-sed auth-hello drop").unwrap();
        let report = run_scenario(&scenario).unwrap();
        assert_eq!(report.unfired_rules, 1);
    }

    #[test]
    fn the_leak_scanner_actually_catches_planted_secrets() {
        // Plant a registered secret inside an injected frame and make sure
        // the scanner is not asleep.
        let secret = [3u8; 32];
        let mut scenario = base_scenario("plant");
        scenario.missions = vec![Mission::Auth(DeviceId(*b"bms-0001"))];
        let mut frame = vec![0xB4, 0x5A, 0x01, 0xFF];
        frame.extend_from_slice(&secret);
        scenario.rules =
            parse_script(&format!("1 to-sed auth-hello inject {}", hex::encode(frame))).unwrap();
        let report = run_scenario(&scenario).unwrap();
        assert!(
            report.leaks.iter().any(|l| l.contains("secret of bms-0001")),
            "{:?}",
            report.leaks
        );
    }
}
