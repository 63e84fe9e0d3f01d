//! Multivalued consensus: agreement on a byte string or ⊥.
//!
//! Phase 0 exchanges proposals. With a quorum of them a process keeps the
//! most common value if more than `f` processes proposed it, otherwise its
//! own proposal, and sends it in phase 1. With a quorum of phase 1 votes a
//! value carried by a whole quorum is proposed to binary consensus as 1,
//! anything else as 0. A binary decision of 1 settles on that value, 0 on ⊥.
//!
//! Votes sign a digest of the value, so justifications list digests rather
//! than values. Justification rules per phase:
//!
//! - 0: empty, the value is present and passes the value predicate.
//! - 1: a quorum of phase 0 votes in which the value's digest appears more
//!   than `f` times, or a quorum containing the sender's own phase 0 vote
//!   for the value in which no digest appears more than `f` times.
//! - 2: a quorum of phase 1 votes all for the value, or for ⊥ a quorum of
//!   phase 1 votes for anything.

use alloc::collections::btree_map::Entry;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::auth::{digest, KeyPair, Signature, Verifier};
use crate::consensus::{
    check_vote, decode_opt, encode_opt, sign_vote, vector, Effect, Group, Vote, MAX_PROPOSAL,
};
use crate::error::Error;
use crate::id::NodeId;
use crate::instance::{InstanceId, ProtocolTag};
use crate::wire::{MsgType, Reader, WireError, Writer};

pub const DOMAIN: u8 = b'M';

pub type Digest = [u8; 32];

fn vote_bytes(d: &Option<Digest>) -> Vec<u8> {
    let mut v = Vec::with_capacity(33);
    match d {
        None => v.push(0),
        Some(d) => {
            v.push(1);
            v.extend_from_slice(d);
        }
    }
    v
}

/// Constraint on acceptable non-⊥ values beyond the protocol rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Any,
    /// The value must be a well-formed row of the given vector instance.
    VectorRow { vid: InstanceId, group: Group },
}

impl Predicate {
    pub fn accepts(&self, value: &[u8], verifier: &dyn Verifier) -> bool {
        match self {
            Predicate::Any => true,
            Predicate::VectorRow { vid, group } => {
                vector::validate_row_bytes(value, vid, group, verifier).is_ok()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MvMsg {
    pub instance: InstanceId,
    pub sender: NodeId,
    pub phase: u32,
    pub value: Option<Vec<u8>>,
    pub sig: Signature,
    pub justification: Vec<Vote<Option<Digest>>>,
}

impl MvMsg {
    pub fn signed(
        key: &KeyPair,
        instance: InstanceId,
        phase: u32,
        value: Option<Vec<u8>>,
        justification: Vec<Vote<Option<Digest>>>,
    ) -> Self {
        let d = value.as_deref().map(digest);
        let sig = sign_vote(key, DOMAIN, &instance, phase, &vote_bytes(&d));
        MvMsg {
            instance,
            sender: key.node(),
            phase,
            value,
            sig,
            justification,
        }
    }

    pub fn digest(&self) -> Option<Digest> {
        self.value.as_deref().map(digest)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(
            64 + self.value.as_ref().map_or(0, |v| v.len()) + self.justification.len() * 80,
        );
        w.u8(MsgType::MvMsg as u8)
            .instance(&self.instance)
            .node(self.sender)
            .u8(self.phase as u8);
        encode_opt(&mut w, &self.value);
        w.sig(&self.sig).u16(self.justification.len() as u16);
        for v in &self.justification {
            w.node(v.sender).u8(v.phase as u8);
            match &v.value {
                None => {
                    w.u8(0);
                }
                Some(d) => {
                    w.u8(1).raw(d);
                }
            }
            w.sig(&v.sig);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != MsgType::MvMsg as u8 {
            return Err(WireError::Malformed("not a multivalued message"));
        }
        let instance = r.instance()?;
        let sender = r.node()?;
        let phase = r.u8()? as u32;
        let value = decode_opt(&mut r)?;
        let sig = r.sig()?;
        let count = r.u16()? as usize;
        let mut justification = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let sender = r.node()?;
            let phase = r.u8()? as u32;
            let value = match r.u8()? {
                0 => None,
                1 => {
                    let mut d = [0u8; 32];
                    for b in d.iter_mut() {
                        *b = r.u8()?;
                    }
                    Some(d)
                }
                _ => return Err(WireError::Malformed("digest flag")),
            };
            let sig = r.sig()?;
            justification.push(Vote {
                sender,
                phase,
                value,
                sig,
            });
        }
        r.finish()?;
        Ok(MvMsg {
            instance,
            sender,
            phase,
            value,
            sig,
            justification,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvReject {
    NotMember,
    BadPhase,
    BadValue,
    BadSignature,
    BadJustification,
}

/// Checks a multivalued message in isolation: membership, value shape and
/// predicate, the sender's signature, and the justification rule of its
/// phase. `known` reports votes whose signature was already checked.
pub fn validate(
    msg: &MvMsg,
    group: &Group,
    predicate: &Predicate,
    verifier: &dyn Verifier,
    known: &dyn Fn(&Vote<Option<Digest>>) -> bool,
) -> Result<(), MvReject> {
    if !group.contains(msg.sender) {
        return Err(MvReject::NotMember);
    }
    if msg.phase > 2 {
        return Err(MvReject::BadPhase);
    }
    if let Some(v) = &msg.value {
        if v.len() > MAX_PROPOSAL || !predicate.accepts(v, verifier) {
            return Err(MvReject::BadValue);
        }
    } else if msg.phase < 2 {
        return Err(MvReject::BadValue);
    }
    let d = msg.digest();
    if !check_vote(
        verifier,
        DOMAIN,
        &msg.instance,
        msg.sender,
        msg.phase,
        &vote_bytes(&d),
        &msg.sig,
    ) {
        return Err(MvReject::BadSignature);
    }
    validate_justification(msg, group, verifier, known)
}

/// The justification rule alone; signatures of the listed votes are
/// checked, the message's own signature is not.
pub fn validate_justification(
    msg: &MvMsg,
    group: &Group,
    verifier: &dyn Verifier,
    known: &dyn Fn(&Vote<Option<Digest>>) -> bool,
) -> Result<(), MvReject> {
    let j = &msg.justification;
    if msg.phase == 0 {
        return if j.is_empty() {
            Ok(())
        } else {
            Err(MvReject::BadJustification)
        };
    }
    let q = group.quorum();
    let f = group.f();
    if j.len() < q {
        return Err(MvReject::BadJustification);
    }
    let expected = msg.phase - 1;
    let mut senders = BTreeSet::new();
    let mut counts: BTreeMap<Option<Digest>, usize> = BTreeMap::new();
    for v in j {
        if v.phase != expected || !group.contains(v.sender) || !senders.insert(v.sender) {
            return Err(MvReject::BadJustification);
        }
        // phase 0 and 1 votes always carry a value
        if v.value.is_none() {
            return Err(MvReject::BadJustification);
        }
        if !known(v)
            && !check_vote(
                verifier,
                DOMAIN,
                &msg.instance,
                v.sender,
                v.phase,
                &vote_bytes(&v.value),
                &v.sig,
            )
        {
            return Err(MvReject::BadJustification);
        }
        *counts.entry(v.value).or_default() += 1;
    }
    let d = msg.digest();
    let ok = match msg.phase {
        1 => {
            let adopted = counts.get(&d).copied().unwrap_or(0) > f;
            let kept = j
                .iter()
                .any(|v| v.sender == msg.sender && v.value == d)
                && counts.values().all(|c| *c <= f);
            adopted || kept
        }
        _ => match d {
            None => true,
            Some(_) => counts.len() == 1 && counts.contains_key(&d),
        },
    };
    if ok {
        Ok(())
    } else {
        Err(MvReject::BadJustification)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MvStats {
    pub accepted: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone)]
pub struct MvState {
    id: InstanceId,
    group: Group,
    me: NodeId,
    predicate: Predicate,
    started: bool,
    phase: u32,
    value: Option<Vec<u8>>,
    proposal_digest: Option<Digest>,
    tallies: [BTreeMap<NodeId, (Digest, Signature)>; 2],
    values: BTreeMap<Digest, Vec<u8>>,
    /// Justification carried into phase 2 once the phase 1 tally resolved.
    j2: Vec<Vote<Option<Digest>>>,
    binary_started: bool,
    binary: Option<bool>,
    /// First validated phase 2 message with a value.
    justified: Option<(Vec<u8>, Vec<Vote<Option<Digest>>>)>,
    decided: Option<Option<Vec<u8>>>,
    pub stats: MvStats,
}

impl MvState {
    pub fn new(id: InstanceId, group: Group, me: NodeId, predicate: Predicate) -> Self {
        MvState {
            id,
            group,
            me,
            predicate,
            started: false,
            phase: 0,
            value: None,
            proposal_digest: None,
            tallies: [BTreeMap::new(), BTreeMap::new()],
            values: BTreeMap::new(),
            j2: Vec::new(),
            binary_started: false,
            binary: None,
            justified: None,
            decided: None,
            stats: MvStats::default(),
        }
    }

    pub fn id(&self) -> &InstanceId {
        &self.id
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn predicate(&self) -> &Predicate {
        &self.predicate
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    pub fn decided(&self) -> Option<&Option<Vec<u8>>> {
        self.decided.as_ref()
    }

    pub fn binary_id(&self) -> InstanceId {
        self.id.child(ProtocolTag::Binary, None)
    }

    pub fn start(
        &mut self,
        proposal: Vec<u8>,
        key: &KeyPair,
        out: &mut Vec<Effect>,
    ) -> Result<(), Error> {
        if proposal.len() > MAX_PROPOSAL {
            return Err(Error::ProposalTooLarge {
                len: proposal.len(),
                max: MAX_PROPOSAL,
            });
        }
        if self.started {
            return Ok(());
        }
        self.started = true;
        let d = digest(&proposal);
        self.proposal_digest = Some(d);
        self.values.insert(d, proposal.clone());
        self.value = Some(proposal);
        self.cast(key, Vec::new(), out);
        self.evaluate(key, out);
        Ok(())
    }

    fn cast(&mut self, key: &KeyPair, j: Vec<Vote<Option<Digest>>>, out: &mut Vec<Effect>) {
        let msg = MvMsg::signed(key, self.id.clone(), self.phase, self.value.clone(), j);
        if let (Some(d), true) = (msg.digest(), self.phase < 2) {
            self.tallies[self.phase as usize].insert(self.me, (d, msg.sig));
        }
        out.push(Effect::Rrb(msg.encode()));
    }

    fn votes(&self, phase: u32) -> Vec<Vote<Option<Digest>>> {
        self.tallies[phase as usize]
            .iter()
            .map(|(s, (d, sig))| Vote {
                sender: *s,
                phase,
                value: Some(*d),
                sig: *sig,
            })
            .collect()
    }

    fn counts(&self, phase: u32) -> BTreeMap<Digest, usize> {
        let mut c = BTreeMap::new();
        for (d, _) in self.tallies[phase as usize].values() {
            *c.entry(*d).or_insert(0) += 1;
        }
        c
    }

    fn pick(&self, phase: u32, first: impl Fn(&Vote<Option<Digest>>) -> bool) -> Vec<Vote<Option<Digest>>> {
        let mut all = self.votes(phase);
        all.sort_by_key(|v| !first(v));
        all.truncate(self.group.quorum());
        all
    }

    fn evaluate(&mut self, key: &KeyPair, out: &mut Vec<Effect>) {
        let q = self.group.quorum();
        let f = self.group.f();
        if !self.started || self.decided.is_some() {
            return;
        }
        if self.phase == 0 && self.tallies[0].len() >= q {
            let counts = self.counts(0);
            // most common digest, ties to the smallest
            let (maj, count) = counts
                .iter()
                .fold((None, 0), |(bd, bc), (d, c)| {
                    if *c > bc {
                        (Some(*d), *c)
                    } else {
                        (bd, bc)
                    }
                });
            let j = if count > f {
                let maj = maj.expect("non-empty tally");
                self.value = self.values.get(&maj).cloned();
                self.pick(0, |v| v.value == Some(maj))
            } else {
                let me = self.me;
                self.pick(0, |v| v.sender == me)
            };
            self.phase = 1;
            self.cast(key, j, out);
        }
        if self.phase == 1 && !self.binary_started && self.tallies[1].len() >= q {
            let counts = self.counts(1);
            let winner = counts.iter().find(|(_, c)| **c >= q).map(|(d, _)| *d);
            let propose = match winner {
                Some(d) => {
                    self.value = self.values.get(&d).cloned();
                    self.j2 = self.pick(1, |v| v.value == Some(d));
                    true
                }
                None => {
                    self.value = None;
                    self.j2 = self.pick(1, |_| true);
                    false
                }
            };
            self.binary_started = true;
            out.push(Effect::StartBinary {
                id: self.binary_id(),
                proposal: propose,
            });
        }
        self.try_finish(key, out);
    }

    fn try_finish(&mut self, key: &KeyPair, out: &mut Vec<Effect>) {
        if self.decided.is_some() || !self.binary_started {
            return;
        }
        let result = match self.binary {
            Some(r) => r,
            None => return,
        };
        self.phase = 2;
        if !result {
            self.value = None;
            let j = core::mem::take(&mut self.j2);
            self.cast(key, j, out);
        } else if self.value.is_some() {
            let j = core::mem::take(&mut self.j2);
            self.cast(key, j, out);
        } else if let Some((v, j)) = self.justified.clone() {
            self.value = Some(v);
            self.cast(key, j, out);
        } else {
            return;
        }
        self.decided = Some(self.value.clone());
        out.push(Effect::Decided);
    }

    /// Result of the embedded binary consensus.
    pub fn on_binary(&mut self, result: bool, key: &KeyPair, out: &mut Vec<Effect>) {
        if self.binary.is_none() {
            self.binary = Some(result);
        }
        self.try_finish(key, out);
    }

    fn is_known(&self, v: &Vote<Option<Digest>>) -> bool {
        v.phase < 2
            && v.value.is_some_and(|d| {
                self.tallies[v.phase as usize]
                    .get(&v.sender)
                    .is_some_and(|(kd, ks)| *kd == d && *ks == v.sig)
            })
    }

    /// Handles a message whose reliable broadcast origin is `msg.sender`.
    pub fn on_message(
        &mut self,
        msg: MvMsg,
        key: &KeyPair,
        verifier: &dyn Verifier,
        out: &mut Vec<Effect>,
    ) -> Result<(), MvReject> {
        if msg.sender == self.me {
            return Ok(());
        }
        let res = validate(&msg, &self.group, &self.predicate, verifier, &|v| {
            self.is_known(v)
        });
        if let Err(e) = res {
            self.stats.rejected += 1;
            return Err(e);
        }
        self.stats.accepted += 1;
        let d = msg.digest();
        match (msg.phase, d) {
            (0 | 1, Some(d)) => {
                if let Entry::Vacant(slot) = self.tallies[msg.phase as usize].entry(msg.sender) {
                    slot.insert((d, msg.sig));
                    if let Some(v) = msg.value {
                        self.values.entry(d).or_insert(v);
                    }
                }
            }
            (2, Some(_)) if self.justified.is_none() => {
                self.justified = msg.value.map(|v| (v, msg.justification));
            }
            _ => {}
        }
        self.evaluate(key, out);
        Ok(())
    }
}
