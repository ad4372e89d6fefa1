//! The scripted man-in-the-middle.
//!
//! The adversary sits on every link of the simulated network. It records
//! each frame it sees (eavesdropping is free) and carries a list of rules;
//! a rule names one specific frame — "the 2nd AuthResponse heading to the
//! SED" — and an action to take on it. Each rule fires at most once.
//!
//! Rules can be built programmatically or parsed from a one-line-per-rule
//! script:
//!
//! ```text
//! 1 from-sed auth-config  tamper last
//! 2 to-sed   auth-response replay 1 to-sed auth-response
//! 2 to-sed   cert-request  splice 1 to-sed cert-request
//! 1 to-sed   auth-hello    drop
//! 1 from-sed auth-challenge delay 3
//! 1 to-sed   auth-hello    inject b45a01ff
//! ```

use std::collections::HashMap;
use std::fmt;

use crate::wire::MsgType;

use super::SimError;

/// Which way a frame is travelling, as the adversary classifies it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// A supplicant (or someone claiming to be one) talking to the SED.
    ToSed,
    /// The SED answering a supplicant.
    FromSed,
    /// Device-to-device session traffic; the SED is offline for these.
    Peer,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::ToSed => "to-sed",
            Direction::FromSed => "from-sed",
            Direction::Peer => "peer",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Names one concrete frame of a run: the `occurrence`-th frame of this
/// type travelling this way (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSelector {
    pub msg_type: MsgType,
    pub direction: Direction,
    pub occurrence: u32,
}

impl fmt::Display for FrameSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.occurrence, self.direction, self.msg_type)
    }
}

/// Which byte of a frame a tamper rule flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperTarget {
    /// A fixed zero-based offset into the framed bytes.
    Offset(usize),
    /// The final byte of the frame.
    Last,
    /// A byte drawn from the simulation RNG.
    Random,
}

/// What happens to a selected frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryAction {
    /// The frame never arrives.
    Drop,
    /// The frame is replaced by a copy of an earlier frame.
    Replay(FrameSelector),
    /// One byte of the frame is flipped.
    TamperByte(TamperTarget),
    /// The frame's session header is overwritten with the session header
    /// of an earlier frame; everything else is left intact.
    Splice(FrameSelector),
    /// Raw bytes are delivered to the same destination just before the
    /// frame itself.
    Inject(Vec<u8>),
    /// The frame is held back for this many ticks.
    Delay(u64),
}

impl fmt::Display for AdversaryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryAction::Drop => write!(f, "drop"),
            AdversaryAction::Replay(src) => write!(f, "replay {src}"),
            AdversaryAction::TamperByte(TamperTarget::Offset(o)) => write!(f, "tamper {o}"),
            AdversaryAction::TamperByte(TamperTarget::Last) => write!(f, "tamper last"),
            AdversaryAction::TamperByte(TamperTarget::Random) => write!(f, "tamper random"),
            AdversaryAction::Splice(src) => write!(f, "splice {src}"),
            AdversaryAction::Inject(bytes) => write!(f, "inject {}", hex::encode(bytes)),
            AdversaryAction::Delay(ticks) => write!(f, "delay {ticks}"),
        }
    }
}

/// One interception rule: when `selector` matches a frame, do `action`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryRule {
    pub selector: FrameSelector,
    pub action: AdversaryAction,
}

impl fmt::Display for AdversaryRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.selector, self.action)
    }
}

/// Parses a whole script: one rule per line, `#` comments and blank lines
/// ignored.
pub fn parse_script(text: &str) -> Result<Vec<AdversaryRule>, SimError> {
    let mut rules = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        rules.push(
            parse_rule(line).map_err(|e| SimError::Script(format!("line {}: {e}", idx + 1)))?,
        );
    }
    Ok(rules)
}

/// Parses one rule line: `<occurrence> <direction> <msg-type> <action> [args]`.
pub fn parse_rule(line: &str) -> Result<AdversaryRule, String> {
    let mut words = line.split_whitespace();
    let selector = parse_selector(&mut words)?;
    let action_word = words.next().ok_or("missing action")?;
    let action = match normalize(action_word).as_str() {
        "drop" => AdversaryAction::Drop,
        "replay" => AdversaryAction::Replay(parse_selector(&mut words)?),
        "splice" => AdversaryAction::Splice(parse_selector(&mut words)?),
        "tamper" => {
            let target = words.next().ok_or("tamper needs a byte target")?;
            let target = match normalize(target).as_str() {
                "last" => TamperTarget::Last,
                "random" => TamperTarget::Random,
                n => TamperTarget::Offset(
                    n.parse::<usize>()
                        .map_err(|_| format!("bad tamper offset {n:?}"))?,
                ),
            };
            AdversaryAction::TamperByte(target)
        }
        "inject" => {
            let hex_str = words.next().ok_or("inject needs hex bytes")?;
            let bytes = hex::decode(hex_str).map_err(|e| format!("bad inject hex: {e}"))?;
            if bytes.is_empty() {
                return Err("inject needs at least one byte".into());
            }
            AdversaryAction::Inject(bytes)
        }
        "delay" => {
            let n = words.next().ok_or("delay needs a tick count")?;
            AdversaryAction::Delay(
                n.parse::<u64>().map_err(|_| format!("bad delay {n:?}"))?,
            )
        }
        other => return Err(format!("unknown action {other:?}")),
    };
    if let Some(extra) = words.next() {
        return Err(format!("unexpected trailing token {extra:?}"));
    }
    Ok(AdversaryRule { selector, action })
}

fn parse_selector<'a>(
    words: &mut impl Iterator<Item = &'a str>,
) -> Result<FrameSelector, String> {
    let occurrence_word = words.next().ok_or("missing occurrence")?;
    let occurrence: u32 = occurrence_word
        .parse()
        .map_err(|_| format!("bad occurrence {occurrence_word:?}"))?;
    if occurrence == 0 {
        return Err("occurrences are counted from 1".into());
    }
    let direction_word = words.next().ok_or("missing direction")?;
    let direction = match normalize(direction_word).as_str() {
        "tosed" => Direction::ToSed,
        "fromsed" => Direction::FromSed,
        "peer" => Direction::Peer,
        other => return Err(format!("unknown direction {other:?}")),
    };
    let type_word = words.next().ok_or("missing message type")?;
    let msg_type = MsgType::ALL
        .into_iter()
        .find(|m| normalize(m.name()) == normalize(type_word))
        .ok_or_else(|| format!("unknown message type {type_word:?}"))?;
    Ok(FrameSelector {
        msg_type,
        direction,
        occurrence,
    })
}

fn normalize(word: &str) -> String {
    word.chars()
        .filter(|c| *c != '-' && *c != '_')
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Runtime state: occurrence counters, the recorded frames, and which
/// rules have already fired.
pub(super) struct Adversary {
    rules: Vec<(AdversaryRule, bool)>,
    counters: HashMap<(MsgType, Direction), u32>,
    recorded: HashMap<(MsgType, Direction, u32), Vec<u8>>,
}

impl Adversary {
    pub(super) fn new(rules: Vec<AdversaryRule>) -> Self {
        Adversary {
            rules: rules.into_iter().map(|r| (r, false)).collect(),
            counters: HashMap::new(),
            recorded: HashMap::new(),
        }
    }

    /// Records a frame travelling the wire and returns the action of the
    /// first unfired rule that names it, if any.
    pub(super) fn observe(
        &mut self,
        msg_type: MsgType,
        direction: Direction,
        bytes: &[u8],
    ) -> Option<AdversaryAction> {
        let count = self.counters.entry((msg_type, direction)).or_insert(0);
        *count += 1;
        let occurrence = *count;
        self.recorded
            .insert((msg_type, direction, occurrence), bytes.to_vec());

        for (rule, fired) in &mut self.rules {
            if !*fired
                && rule.selector.msg_type == msg_type
                && rule.selector.direction == direction
                && rule.selector.occurrence == occurrence
            {
                *fired = true;
                return Some(rule.action.clone());
            }
        }
        None
    }

    /// Looks up a previously recorded frame for replay or splicing.
    pub(super) fn recorded(&self, src: &FrameSelector) -> Result<&[u8], SimError> {
        self.recorded
            .get(&(src.msg_type, src.direction, src.occurrence))
            .map(Vec::as_slice)
            .ok_or_else(|| SimError::SourceUnseen(src.to_string()))
    }

    /// How many rules never matched a frame — usually a sign the scenario
    /// script and the mission list disagree.
    pub(super) fn unfired(&self) -> usize {
        self.rules.iter().filter(|(_, fired)| !*fired).count()
    }
}
