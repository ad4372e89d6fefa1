//! The adversarial test suite: seven attacks, T1–T7, each expressed as a
//! [`Scenario`] plus a verdict on what the protocol must do about it.
//!
//! With the key ratchet enabled the full suite passes. With the ratchet
//! disabled (`ratchet_enabled = false`) exactly one defense collapses —
//! T5, the stolen-key impersonation — which is the point of having the
//! ratchet: every other defense rests on challenges, MACs, or session
//! binding, but only key evolution limits the blast radius of a one-time
//! key theft.

use crate::ec::AlgorithmId;
use crate::error::{CryptoError, ProtocolError};
use crate::ids::DeviceId;
use crate::roles::Role;

use super::adversary::parse_script;
use super::{run_scenario, DeviceSpec, Mission, Outcome, Scenario, ScenarioReport, SimError};

const VICTIM: DeviceId = DeviceId(*b"bms-0001");
const PEER: DeviceId = DeviceId(*b"ctrl-001");
const STRANGER: DeviceId = DeviceId(*b"ghost-01");

/// The outcome of one threat case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreatReport {
    pub id: &'static str,
    pub name: &'static str,
    /// What the defense is supposed to achieve in this configuration.
    pub expectation: String,
    /// What actually happened.
    pub observed: String,
    /// Whether the defense held.
    pub passed: bool,
    /// The full scenario report, for drill-down.
    pub detail: ScenarioReport,
}

struct ThreatSpec {
    id: &'static str,
    name: &'static str,
    build: fn(AlgorithmId, bool, u64) -> Result<Scenario, SimError>,
    judge: fn(&ScenarioReport, bool) -> (String, String, bool),
}

fn specs() -> [ThreatSpec; 7] {
    [
        ThreatSpec {
            id: "T1",
            name: "message manipulation",
            build: |alg, ratchet, seed| {
                Ok(Scenario {
                    name: "T1 message manipulation".into(),
                    algorithm: alg,
                    ratchet_enabled: ratchet,
                    seed,
                    devices: vec![DeviceSpec::trusted(VICTIM, Role::Bms, [0x11; 32])],
                    missions: vec![Mission::Auth(VICTIM)],
                    rules: parse_script("1 from-sed auth-config tamper last")?,
                    steal_keys_of: None,
                })
            },
            judge: |report, _ratchet| {
                let expected = Outcome::RejectedBy {
                    role: Role::Bms,
                    error: ProtocolError::Crypto(CryptoError::AuthenticationFailure),
                };
                (
                    "device refuses the tampered configuration message".into(),
                    observed(report),
                    report.outcomes[0].outcome == expected,
                )
            },
        },
        ThreatSpec {
            id: "T2",
            name: "eavesdropping",
            build: |alg, ratchet, seed| {
                Ok(Scenario {
                    name: "T2 eavesdropping".into(),
                    algorithm: alg,
                    ratchet_enabled: ratchet,
                    seed,
                    devices: vec![
                        DeviceSpec::trusted(VICTIM, Role::Bms, [0x22; 32]),
                        DeviceSpec::trusted(PEER, Role::ControlUnit, [0x23; 32]),
                    ],
                    missions: vec![
                        Mission::Auth(VICTIM),
                        Mission::Cert(VICTIM),
                        Mission::Auth(PEER),
                        Mission::Cert(PEER),
                        Mission::Session {
                            initiator: VICTIM,
                            responder: PEER,
                        },
                    ],
                    rules: Vec::new(),
                    steal_keys_of: None,
                })
            },
            judge: |report, _ratchet| {
                let clean = report.all_completed() && report.leaks.is_empty();
                let observed = if report.leaks.is_empty() {
                    format!("{}; no secret bytes on the wire", observed(report))
                } else {
                    format!("leaked: {}", report.leaks.join("; "))
                };
                (
                    "all flows complete and no key, secret, or configuration \
                     payload appears in cleartext on the wire"
                        .into(),
                    observed,
                    clean,
                )
            },
        },
        ThreatSpec {
            id: "T3",
            name: "unauthorized device",
            build: |alg, ratchet, seed| {
                Ok(Scenario {
                    name: "T3 unauthorized device".into(),
                    algorithm: alg,
                    ratchet_enabled: ratchet,
                    seed,
                    devices: vec![DeviceSpec::unregistered(STRANGER, Role::Bms, [0x33; 32])],
                    missions: vec![Mission::Auth(STRANGER)],
                    rules: Vec::new(),
                    steal_keys_of: None,
                })
            },
            judge: |report, _ratchet| {
                let expected = Outcome::RejectedBy {
                    role: Role::Sed,
                    error: ProtocolError::UnknownDevice,
                };
                (
                    "SED turns the unknown device away before any key work".into(),
                    observed(report),
                    report.outcomes[0].outcome == expected,
                )
            },
        },
        ThreatSpec {
            id: "T4",
            name: "message replay",
            build: |alg, ratchet, seed| {
                Ok(Scenario {
                    name: "T4 message replay".into(),
                    algorithm: alg,
                    ratchet_enabled: ratchet,
                    seed,
                    devices: vec![DeviceSpec::trusted(VICTIM, Role::Bms, [0x44; 32])],
                    missions: vec![Mission::Auth(VICTIM), Mission::Auth(VICTIM)],
                    rules: parse_script(
                        "2 to-sed auth-response replay 1 to-sed auth-response",
                    )?,
                    steal_keys_of: None,
                })
            },
            judge: |report, ratchet| {
                let (expectation, expected) = if ratchet {
                    (
                        "the replayed response was sealed under a retired key \
                         epoch and fails authentication"
                            .to_string(),
                        Outcome::RejectedBy {
                            role: Role::Sed,
                            error: ProtocolError::Crypto(CryptoError::AuthenticationFailure),
                        },
                    )
                } else {
                    (
                        "without the ratchet the old keys still open the replay, \
                         but the stale challenge echo gives it away"
                            .to_string(),
                        Outcome::RejectedBy {
                            role: Role::Sed,
                            error: ProtocolError::ChallengeMismatch,
                        },
                    )
                };
                let ok = report.outcomes[0].outcome.is_completed()
                    && report.outcomes[1].outcome == expected;
                (expectation, observed(report), ok)
            },
        },
        ThreatSpec {
            id: "T5",
            name: "stolen-key impersonation",
            build: |alg, ratchet, seed| {
                Ok(Scenario {
                    name: "T5 stolen-key impersonation".into(),
                    algorithm: alg,
                    ratchet_enabled: ratchet,
                    seed,
                    devices: vec![DeviceSpec::trusted(VICTIM, Role::Bms, [0x55; 32])],
                    // The attacker steals the provisioning-time keys, keeps
                    // pace through one observed cycle, misses the next one,
                    // then tries to pass as the device.
                    missions: vec![
                        Mission::Auth(VICTIM),
                        Mission::AuthUnobserved(VICTIM),
                        Mission::Impersonate(VICTIM),
                    ],
                    rules: Vec::new(),
                    steal_keys_of: Some(VICTIM),
                })
            },
            judge: |report, ratchet| {
                let honest_ok = report.outcomes[0].outcome.is_completed()
                    && report.outcomes[1].outcome.is_completed();
                let rejected = report.outcomes[2].outcome
                    == Outcome::RejectedBy {
                        role: Role::Sed,
                        error: ProtocolError::Crypto(CryptoError::AuthenticationFailure),
                    };
                let expectation = if ratchet {
                    "one missed cycle leaves the stolen keys a full epoch \
                     behind, so the impersonation fails authentication"
                        .to_string()
                } else {
                    "with the ratchet disabled the stolen keys never age out; \
                     this defense is expected to collapse"
                        .to_string()
                };
                (expectation, observed(report), honest_ok && rejected)
            },
        },
        ThreatSpec {
            id: "T6",
            name: "session splicing",
            build: |alg, ratchet, seed| {
                Ok(Scenario {
                    name: "T6 session splicing".into(),
                    algorithm: alg,
                    ratchet_enabled: ratchet,
                    seed,
                    devices: vec![
                        DeviceSpec::trusted(VICTIM, Role::Bms, [0x66; 32]),
                        DeviceSpec::trusted(PEER, Role::ControlUnit, [0x67; 32]),
                    ],
                    missions: vec![
                        Mission::Auth(VICTIM),
                        Mission::Auth(PEER),
                        Mission::Cert(VICTIM),
                        Mission::Cert(PEER),
                    ],
                    rules: parse_script("2 to-sed cert-request splice 1 to-sed cert-request")?,
                    steal_keys_of: None,
                })
            },
            judge: |report, _ratchet| {
                let expected = Outcome::RejectedBy {
                    role: Role::Sed,
                    error: ProtocolError::Crypto(CryptoError::AuthenticationFailure),
                };
                let ok = report.outcomes[..3]
                    .iter()
                    .all(|m| m.outcome.is_completed())
                    && report.outcomes[3].outcome == expected;
                (
                    "a certificate request grafted onto another device's \
                     session fails its MAC"
                        .into(),
                    observed(report),
                    ok,
                )
            },
        },
        ThreatSpec {
            id: "T7",
            name: "counterfeit device",
            build: |alg, ratchet, seed| {
                Ok(Scenario {
                    name: "T7 counterfeit device".into(),
                    algorithm: alg,
                    ratchet_enabled: ratchet,
                    seed,
                    devices: vec![DeviceSpec::counterfeit(
                        VICTIM,
                        Role::Bms,
                        [0x77; 32],
                        [0x78; 32],
                    )],
                    missions: vec![Mission::Auth(VICTIM)],
                    rules: Vec::new(),
                    steal_keys_of: None,
                })
            },
            judge: |report, _ratchet| {
                let expected = Outcome::RejectedBy {
                    role: Role::Sed,
                    error: ProtocolError::Crypto(CryptoError::AuthenticationFailure),
                };
                (
                    "a device fabricated with the wrong secret cannot answer \
                     the challenge"
                        .into(),
                    observed(report),
                    report.outcomes[0].outcome == expected,
                )
            },
        },
    ]
}

fn observed(report: &ScenarioReport) -> String {
    report
        .outcomes
        .iter()
        .map(|m| format!("[{}: {}]", m.mission, m.outcome))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Runs the whole suite. Every case gets its own derived seed so the cases
/// stay independent, and the same `seed` reproduces the same reports.
pub fn run_threat_suite(
    algorithm: AlgorithmId,
    ratchet_enabled: bool,
    seed: u64,
) -> Result<Vec<ThreatReport>, SimError> {
    specs()
        .into_iter()
        .enumerate()
        .map(|(index, spec)| {
            let scenario = (spec.build)(
                algorithm,
                ratchet_enabled,
                seed.wrapping_add(1 + index as u64),
            )?;
            let detail = run_scenario(&scenario)?;
            if detail.unfired_rules != 0 {
                return Err(SimError::Internal(format!(
                    "{}: {} adversary rule(s) never fired",
                    spec.id, detail.unfired_rules
                )));
            }
            let (expectation, observed, passed) = (spec.judge)(&detail, ratchet_enabled);
            Ok(ThreatReport {
                id: spec.id,
                name: spec.name,
                expectation,
                observed,
                passed,
                detail,
            })
        })
        .collect()
}

/// Plain-text table of suite results for terminal output.
pub fn suite_table(reports: &[ThreatReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<4} {:<26} {:<6} detail\n",
        "case", "threat", "result"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<4} {:<26} {:<6} {}\n",
            r.id,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.observed
        ));
    }
    out
}
