//! Randomized binary consensus in rounds of three phases.
//!
//! Phases are numbered globally: round `r` (from 1) owns phases
//! `3(r-1)` (CONVERGE), `3(r-1)+1` (LOCK) and `3(r-1)+2` (DECIDE). Every
//! message carries the sender's signed vote for its current phase and a
//! justification: the signed votes of the previous phase that make the
//! value legal. Values are `0`, `1` or ⊥ ([`BOT`]).
//!
//! Transitions, taken when votes from a quorum `q > (n+f)/2` of distinct
//! members are held for the current phase:
//!
//! - CONVERGE: move to LOCK with the most common value (own value on a tie).
//! - LOCK: move to DECIDE with `v` if `q` votes are `v`, otherwise ⊥.
//! - DECIDE: decide `v` if `q` votes are `v`; otherwise start the next
//!   round with a non-⊥ value seen in the phase, or, when every vote is ⊥,
//!   with a coin: the majority of all CONVERGE votes observed in the round,
//!   falling back to a local random bit on a tie.
//!
//! Only votes of messages that passed validation are counted. Any two
//! justified non-⊥ DECIDE values of one phase are equal (their LOCK quorums
//! intersect in a correct process), which is what makes adopting a single
//! observed non-⊥ value safe. A decided process broadcasts a DECIDED message
//! whose justification is the deciding quorum; receivers decide on it.
//! A process that sees a validated message from a later phase jumps to it,
//! adopting its value and justification.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::auth::{KeyPair, Signature, Verifier};
use crate::consensus::{check_vote, sign_vote, Effect, Group, Vote};
use crate::id::NodeId;
use crate::instance::InstanceId;
use crate::wire::{MsgType, Reader, WireError, Writer};

pub const DOMAIN: u8 = b'B';
pub const BOT: u8 = 2;
/// Ticks a decided process keeps repeating its DECIDED message while some
/// members have not been heard deciding.
pub const LINGER_TICKS: u32 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PhaseKind {
    Converge,
    Lock,
    Decide,
}

impl PhaseKind {
    pub fn of(phase: u32) -> Self {
        match phase % 3 {
            0 => PhaseKind::Converge,
            1 => PhaseKind::Lock,
            _ => PhaseKind::Decide,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseKind::Converge => "CONVERGE",
            PhaseKind::Lock => "LOCK",
            PhaseKind::Decide => "DECIDE",
        }
    }
}

pub fn phase_of(round: u32, kind: PhaseKind) -> u32 {
    3 * (round - 1) + kind as u32
}

pub fn round_of(phase: u32) -> u32 {
    phase / 3 + 1
}

fn vote_value(value: u8, decided: bool) -> [u8; 2] {
    [value, decided as u8]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinMsg {
    pub instance: InstanceId,
    pub sender: NodeId,
    pub phase: u32,
    pub value: u8,
    pub decided: bool,
    pub sig: Signature,
    pub justification: Vec<Vote<u8>>,
}

impl BinMsg {
    pub fn signed(
        key: &KeyPair,
        instance: InstanceId,
        phase: u32,
        value: u8,
        decided: bool,
        justification: Vec<Vote<u8>>,
    ) -> Self {
        let sig = sign_vote(key, DOMAIN, &instance, phase, &vote_value(value, decided));
        BinMsg {
            instance,
            sender: key.node(),
            phase,
            value,
            decided,
            sig,
            justification,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(64 + self.justification.len() * 48);
        w.u8(MsgType::BinPhase as u8)
            .instance(&self.instance)
            .node(self.sender)
            .u32(self.phase)
            .u8(self.value)
            .u8(self.decided as u8)
            .sig(&self.sig)
            .u16(self.justification.len() as u16);
        for v in &self.justification {
            w.node(v.sender).u32(v.phase).u8(v.value).sig(&v.sig);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != MsgType::BinPhase as u8 {
            return Err(WireError::Malformed("not a binary message"));
        }
        let instance = r.instance()?;
        let sender = r.node()?;
        let phase = r.u32()?;
        let value = r.u8()?;
        let decided = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(WireError::Malformed("decided flag")),
        };
        let sig = r.sig()?;
        let count = r.u16()? as usize;
        let mut justification = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            justification.push(Vote {
                sender: r.node()?,
                phase: r.u32()?,
                value: r.u8()?,
                sig: r.sig()?,
            });
        }
        r.finish()?;
        Ok(BinMsg {
            instance,
            sender,
            phase,
            value,
            decided,
            sig,
            justification,
        })
    }

    pub fn round(&self) -> u32 {
        round_of(self.phase)
    }

    pub fn kind(&self) -> PhaseKind {
        PhaseKind::of(self.phase)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinReject {
    NotMember,
    BadValue,
    BadSignature,
    BadJustification,
}

fn counts(votes: &[Vote<u8>]) -> [usize; 3] {
    let mut c = [0usize; 3];
    for v in votes {
        c[v.value.min(2) as usize] += 1;
    }
    c
}

/// Checks a message's own signature and that its justification makes the
/// value legal. `known` reports votes whose signature was already checked.
pub fn validate(
    msg: &BinMsg,
    group: &Group,
    verifier: &dyn Verifier,
    known: &dyn Fn(&Vote<u8>) -> bool,
) -> Result<(), BinReject> {
    if !group.contains(msg.sender) {
        return Err(BinReject::NotMember);
    }
    let kind = msg.kind();
    let value_ok = match (kind, msg.decided) {
        (PhaseKind::Decide, false) => msg.value <= BOT,
        (PhaseKind::Decide, true) => msg.value <= 1,
        (_, true) => false,
        (_, false) => msg.value <= 1,
    };
    if !value_ok {
        return Err(BinReject::BadValue);
    }
    if !check_vote(
        verifier,
        DOMAIN,
        &msg.instance,
        msg.sender,
        msg.phase,
        &vote_value(msg.value, msg.decided),
        &msg.sig,
    ) {
        return Err(BinReject::BadSignature);
    }
    let j = &msg.justification;
    if msg.phase == 0 && !msg.decided {
        return if j.is_empty() {
            Ok(())
        } else {
            Err(BinReject::BadJustification)
        };
    }
    let expected = if msg.decided { msg.phase } else { msg.phase - 1 };
    let mut senders = BTreeSet::new();
    for v in j {
        if v.phase != expected
            || v.value > BOT
            || !group.contains(v.sender)
            || !senders.insert(v.sender)
        {
            return Err(BinReject::BadJustification);
        }
        if !known(v)
            && !check_vote(
                verifier,
                DOMAIN,
                &msg.instance,
                v.sender,
                v.phase,
                &vote_value(v.value, false),
                &v.sig,
            )
        {
            return Err(BinReject::BadJustification);
        }
    }
    let q = group.quorum();
    if j.len() < q {
        return Err(BinReject::BadJustification);
    }
    let c = counts(j);
    let ok = if msg.decided {
        c[msg.value as usize] >= q
    } else {
        match kind {
            // previous phase was DECIDE
            PhaseKind::Converge => {
                if c[0] > 0 && c[1] > 0 {
                    false
                } else if c[0] > 0 {
                    msg.value == 0
                } else if c[1] > 0 {
                    msg.value == 1
                } else {
                    true
                }
            }
            PhaseKind::Lock => {
                c[BOT as usize] == 0 && c[msg.value as usize] >= c[1 - msg.value as usize]
            }
            PhaseKind::Decide => {
                c[BOT as usize] == 0
                    && if msg.value == BOT {
                        c[0] < q && c[1] < q
                    } else {
                        c[msg.value as usize] >= q
                    }
            }
        }
    };
    if ok {
        Ok(())
    } else {
        Err(BinReject::BadJustification)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinStats {
    pub accepted: u64,
    pub rejected: u64,
    pub jumps: u64,
    pub coins: u64,
}

#[derive(Debug, Clone)]
pub struct BinaryState {
    id: InstanceId,
    group: Group,
    me: NodeId,
    started: bool,
    proposal: Option<bool>,
    phase: u32,
    value: u8,
    justification: Vec<Vote<u8>>,
    /// Votes of validated messages, per phase and sender (first one wins).
    tallies: BTreeMap<u32, BTreeMap<NodeId, (u8, Signature)>>,
    decided: Option<(bool, u32)>,
    seen_decided: BTreeSet<NodeId>,
    last_payload: Option<Vec<u8>>,
    linger: u32,
    pub stats: BinStats,
}

impl BinaryState {
    pub fn new(id: InstanceId, group: Group, me: NodeId) -> Self {
        BinaryState {
            id,
            group,
            me,
            started: false,
            proposal: None,
            phase: 0,
            value: 0,
            justification: Vec::new(),
            tallies: BTreeMap::new(),
            decided: None,
            seen_decided: BTreeSet::new(),
            last_payload: None,
            linger: 0,
            stats: BinStats::default(),
        }
    }

    pub fn id(&self) -> &InstanceId {
        &self.id
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn decided(&self) -> Option<bool> {
        self.decided.map(|d| d.0)
    }

    /// Round in which the deciding quorum formed.
    pub fn decision_round(&self) -> Option<u32> {
        self.decided.map(|d| round_of(d.1))
    }

    pub fn round(&self) -> u32 {
        round_of(self.phase)
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn proposal(&self) -> Option<bool> {
        self.proposal
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    /// Last payload broadcast by this instance.
    pub fn last_payload(&self) -> Option<&[u8]> {
        self.last_payload.as_deref()
    }

    fn record(&mut self, sender: NodeId, phase: u32, value: u8, sig: Signature) -> bool {
        let t = self.tallies.entry(phase).or_default();
        if t.contains_key(&sender) {
            return false;
        }
        t.insert(sender, (value, sig));
        true
    }

    fn is_known(&self, v: &Vote<u8>) -> bool {
        self.tallies
            .get(&v.phase)
            .and_then(|t| t.get(&v.sender))
            .is_some_and(|(val, sig)| *val == v.value && *sig == v.sig)
    }

    pub fn start(
        &mut self,
        proposal: bool,
        key: &KeyPair,
        rng: &mut dyn RngCore,
        out: &mut Vec<Effect>,
    ) {
        if self.started {
            return;
        }
        self.started = true;
        self.proposal = Some(proposal);
        if self.decided.is_some() {
            return;
        }
        self.phase = 0;
        self.value = proposal as u8;
        self.justification.clear();
        self.cast(key, out);
        self.evaluate(key, rng, out);
    }

    fn cast(&mut self, key: &KeyPair, out: &mut Vec<Effect>) {
        let msg = BinMsg::signed(
            key,
            self.id.clone(),
            self.phase,
            self.value,
            false,
            self.justification.clone(),
        );
        self.record(self.me, self.phase, self.value, msg.sig);
        let payload = msg.encode();
        self.last_payload = Some(payload.clone());
        out.push(Effect::Beb(payload));
    }

    fn votes(&self, phase: u32) -> Vec<Vote<u8>> {
        self.tallies
            .get(&phase)
            .map(|t| {
                t.iter()
                    .map(|(s, (v, sig))| Vote {
                        sender: *s,
                        phase,
                        value: *v,
                        sig: *sig,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Picks `q` votes, taking those for which `prefer` holds first.
    fn pick(&self, phase: u32, prefer: impl Fn(u8) -> bool) -> Vec<Vote<u8>> {
        let q = self.group.quorum();
        let mut all = self.votes(phase);
        all.sort_by_key(|v| !prefer(v.value));
        all.truncate(q);
        all
    }

    fn decide(&mut self, value: bool, phase: u32, key: &KeyPair, out: &mut Vec<Effect>) {
        if self.decided.is_some() {
            return;
        }
        let just = self.pick(phase, |v| v == value as u8);
        self.decide_with(value, phase, just, key, out);
    }

    fn decide_with(
        &mut self,
        value: bool,
        phase: u32,
        just: Vec<Vote<u8>>,
        key: &KeyPair,
        out: &mut Vec<Effect>,
    ) {
        self.decided = Some((value, phase));
        self.phase = phase;
        self.value = value as u8;
        let msg = BinMsg::signed(key, self.id.clone(), phase, value as u8, true, just);
        let payload = msg.encode();
        self.last_payload = Some(payload.clone());
        out.push(Effect::Beb(payload));
        out.push(Effect::Decided);
    }

    fn evaluate(&mut self, key: &KeyPair, rng: &mut dyn RngCore, out: &mut Vec<Effect>) {
        let q = self.group.quorum();
        while self.started && self.decided.is_none() {
            let held = self.tallies.get(&self.phase).map_or(0, |t| t.len());
            if held < q {
                return;
            }
            let c = counts(&self.votes(self.phase));
            let phase = self.phase;
            let (next, just) = match PhaseKind::of(phase) {
                PhaseKind::Converge => {
                    let b = if c[1] > c[0] {
                        1
                    } else if c[0] > c[1] {
                        0
                    } else {
                        self.value
                    };
                    (b, self.pick(phase, |v| v == b))
                }
                PhaseKind::Lock => {
                    if c[0] >= q {
                        (0, self.pick(phase, |v| v == 0))
                    } else if c[1] >= q {
                        (1, self.pick(phase, |v| v == 1))
                    } else {
                        (BOT, self.pick(phase, |_| true))
                    }
                }
                PhaseKind::Decide => {
                    if c[0] >= q || c[1] >= q {
                        self.decide(c[1] >= q, phase, key, out);
                        return;
                    }
                    let b = if c[0] > 0 {
                        0
                    } else if c[1] > 0 {
                        1
                    } else {
                        self.stats.coins += 1;
                        let conv = counts(&self.votes(phase - 2));
                        if conv[1] > conv[0] {
                            1
                        } else if conv[0] > conv[1] {
                            0
                        } else {
                            (rng.next_u32() & 1) as u8
                        }
                    };
                    (b, self.pick(phase, |v| v != BOT))
                }
            };
            self.phase = phase + 1;
            self.value = next;
            self.justification = just;
            self.cast(key, out);
        }
    }

    /// Handles a decoded message from `msg.sender`.
    pub fn on_message(
        &mut self,
        msg: BinMsg,
        key: &KeyPair,
        verifier: &dyn Verifier,
        rng: &mut dyn RngCore,
        out: &mut Vec<Effect>,
    ) -> Result<(), BinReject> {
        if msg.sender == self.me {
            return Ok(());
        }
        // Cheap replay filter: the same vote already counted.
        if !msg.decided
            && self
                .tallies
                .get(&msg.phase)
                .and_then(|t| t.get(&msg.sender))
                .is_some_and(|(_, sig)| *sig == msg.sig)
        {
            return Ok(());
        }
        if msg.decided && self.seen_decided.contains(&msg.sender) {
            return Ok(());
        }
        let res = validate(&msg, &self.group, verifier, &|v| self.is_known(v));
        if let Err(e) = res {
            self.stats.rejected += 1;
            return Err(e);
        }
        self.stats.accepted += 1;
        if msg.decided {
            self.seen_decided.insert(msg.sender);
            if self.decided.is_none() {
                self.decide_with(msg.value == 1, msg.phase, msg.justification, key, out);
            }
            return Ok(());
        }
        self.record(msg.sender, msg.phase, msg.value, msg.sig);
        if self.decided.is_some() {
            return Ok(());
        }
        if msg.kind() == PhaseKind::Decide && msg.value != BOT {
            let q = self.group.quorum();
            let c = counts(&self.votes(msg.phase));
            if c[msg.value as usize] >= q {
                self.decide(msg.value == 1, msg.phase, key, out);
                return Ok(());
            }
        }
        if self.started && msg.phase > self.phase {
            self.stats.jumps += 1;
            self.phase = msg.phase;
            self.value = msg.value;
            self.justification = msg.justification;
            self.cast(key, out);
        }
        self.evaluate(key, rng, out);
        Ok(())
    }

    /// Whether periodic ticks still have work to do.
    pub fn wants_tick(&self) -> bool {
        if self.last_payload.is_none() {
            return false;
        }
        if self.decided.is_none() {
            return true;
        }
        let all_seen = self
            .group
            .members()
            .iter()
            .filter(|m| **m != self.me)
            .all(|m| self.seen_decided.contains(m));
        !all_seen && self.linger < LINGER_TICKS
    }

    /// Periodic retransmission of the current message. Stops once every
    /// other member was heard deciding, or after a grace period.
    pub fn on_tick(&mut self, out: &mut Vec<Effect>) {
        if !self.wants_tick() {
            return;
        }
        if self.decided.is_some() {
            self.linger += 1;
        }
        out.push(Effect::Rebroadcast);
    }
}
