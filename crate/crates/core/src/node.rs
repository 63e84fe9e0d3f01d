//! One process of the stack: communication, membership and consensus
//! composed behind a sans-IO interface.
//!
//! The owner feeds received bytes and timer expirations in and carries out
//! the returned [`Output`]s: radio transmissions, timer requests and events.
//! A timer request replaces any earlier request for the same key; stale
//! expirations are ignored.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::auth::{KeyPair, Verifier};
use crate::cache::ResultCache;
use crate::comm::{CommConfig, CommLayer, Delivery, Transmission, Via};
use crate::consensus::binary::{BinMsg, BinaryState};
use crate::consensus::decision::{
    decode_query, decode_reply, encode_query, encode_reply, DecisionCollector, DecisionMsg,
};
use crate::consensus::multivalued::{MvMsg, MvState, Predicate};
use crate::consensus::vector::{VecRowMsg, VecState};
use crate::consensus::{encode_bit, encode_mv_outcome, Effect, Group};
use crate::error::Error;
use crate::id::{NodeId, SimTime};
use crate::instance::{InstanceId, InstanceRegistry, ProtocolTag};
use crate::membership::{Membership, MembershipConfig, MembershipEvent, SinkView};
use crate::wire::MsgType;

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub comm: CommConfig,
    pub membership: MembershipConfig,
    /// Period of consensus retransmissions.
    pub consensus_tick: SimTime,
    /// Messages of not yet started instances kept for later, in total.
    pub pending_limit: usize,
    /// Send signed decisions to known nodes outside the group.
    pub disseminate: bool,
    pub seed: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            comm: CommConfig::default(),
            membership: MembershipConfig::default(),
            consensus_tick: 10,
            pending_limit: 8192,
            disseminate: true,
            seed: 0,
        }
    }
}

impl NodeConfig {
    /// Sets the fault budget of every layer.
    pub fn with_f(mut self, f: usize) -> Self {
        self.comm.f = f;
        self.membership.f = f;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKey {
    Comm,
    Heartbeat,
    Discovery,
    Sink,
    Consensus,
}

impl TimerKey {
    pub const ALL: [TimerKey; 5] = [
        TimerKey::Comm,
        TimerKey::Heartbeat,
        TimerKey::Discovery,
        TimerKey::Sink,
        TimerKey::Consensus,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Proposal {
    Binary(bool),
    Multivalued(Vec<u8>),
    Vector(Vec<u8>),
}

impl Proposal {
    pub fn tag(&self) -> ProtocolTag {
        match self {
            Proposal::Binary(_) => ProtocolTag::Binary,
            Proposal::Multivalued(_) => ProtocolTag::Multivalued,
            Proposal::Vector(_) => ProtocolTag::Vector,
        }
    }

    /// Bytes recorded for the proposal in events.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Proposal::Binary(b) => encode_bit(*b),
            Proposal::Multivalued(v) | Proposal::Vector(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeEvent {
    NeighborAdded(NodeId),
    NeighborRemoved(NodeId),
    DiscoveryComplete { known: Vec<NodeId>, partial: bool },
    SinkFormed(SinkView),
    SinkUnavailable { epoch: u32 },
    Proposed { instance: InstanceId, value: Vec<u8> },
    /// A local decision. `value` uses the decision encoding of the protocol
    /// (a bit, an optional value, or an encoded row). `round` is the binary
    /// round, the binary round of the embedded instance for multivalued
    /// consensus, or the number of multivalued rounds for vector consensus.
    Decided {
        instance: InstanceId,
        value: Vec<u8>,
        round: u32,
        nested: bool,
    },
    /// A result accepted from `f + 1` signed decisions of group members.
    ResultAccepted { instance: InstanceId, value: Vec<u8> },
    /// A multivalued message that passed validation and was counted.
    MvAccepted { from: NodeId, payload: Vec<u8> },
    Rejected { instance: InstanceId, from: NodeId, reason: &'static str },
}

#[derive(Clone, Debug)]
pub enum Output {
    Transmit(Transmission),
    Timer { key: TimerKey, at: SimTime },
    Event(NodeEvent),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeMetrics {
    pub rejected: u64,
    pub wrong_origin: u64,
    pub malformed: u64,
    pub pending_dropped: u64,
    pub replayed: u64,
}

#[derive(Debug)]
enum Proto {
    Bin(BinaryState),
    Mv(MvState),
    Vec(VecState),
}

#[derive(Debug)]
struct Slot {
    proto: Proto,
    parent: Option<InstanceId>,
    beb_envelope: Option<Vec<u8>>,
    reported: bool,
}

#[derive(Debug)]
struct Buffered {
    origin: NodeId,
    via: Via,
    payload: Vec<u8>,
}

pub struct Node {
    key: KeyPair,
    cfg: NodeConfig,
    comm: CommLayer,
    membership: Membership,
    static_group: Option<Group>,
    instances: InstanceRegistry<Slot>,
    pending: BTreeMap<InstanceId, Vec<Buffered>>,
    pending_len: usize,
    collector: DecisionCollector,
    results: ResultCache<Vec<u8>>,
    rng: ChaCha8Rng,
    armed: BTreeMap<TimerKey, SimTime>,
    out: Vec<Output>,
    pub metrics: NodeMetrics,
}

impl core::fmt::Debug for Node {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.key.node())
            .field("instances", &self.instances.len())
            .finish_non_exhaustive()
    }
}

impl Node {
    pub fn new(key: KeyPair, verifier: Arc<dyn Verifier>, cfg: NodeConfig) -> Self {
        let me = key.node();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((me.get() as u64) << 32 | 0x5eed));
        Node {
            comm: CommLayer::new(key.clone(), verifier, cfg.comm.clone()),
            membership: Membership::new(me, cfg.membership.clone()),
            key,
            cfg,
            static_group: None,
            instances: InstanceRegistry::new(),
            pending: BTreeMap::new(),
            pending_len: 0,
            collector: DecisionCollector::new(),
            results: ResultCache::new(),
            rng,
            armed: BTreeMap::new(),
            out: Vec::new(),
            metrics: NodeMetrics::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.key.node()
    }

    pub fn comm(&self) -> &CommLayer {
        &self.comm
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    pub fn results(&self) -> &ResultCache<Vec<u8>> {
        &self.results
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    /// The group new instances run in: the static group if one was set,
    /// otherwise the current sink.
    pub fn group(&self) -> Option<Group> {
        if let Some(g) = &self.static_group {
            return Some(g.clone());
        }
        let sink = self.membership.sink()?;
        Group::new(sink.members.clone(), self.cfg.membership.f).ok()
    }

    /// Runs consensus among a fixed set of nodes instead of the sink.
    pub fn set_static_group(&mut self, members: Vec<NodeId>, f: usize) -> Result<(), Error> {
        self.static_group = Some(Group::new(members, f)?);
        Ok(())
    }

    /// Starts heartbeats, discovery and sink formation.
    pub fn start_membership(&mut self, now: SimTime) -> Vec<Output> {
        self.membership.start(now, &mut self.comm);
        self.finish(now)
    }

    /// Proposes a value for the instance `label`. Fails if the node is not
    /// a group member or the instance already exists.
    pub fn propose(
        &mut self,
        now: SimTime,
        label: &str,
        proposal: Proposal,
    ) -> Result<(InstanceId, Vec<Output>), Error> {
        let group = self.group().ok_or(Error::NoGroup)?;
        let me = self.id();
        if !group.contains(me) {
            return Err(Error::NotInGroup(me));
        }
        let id = InstanceId::new(label, proposal.tag());
        if self.instances.contains(&id) {
            return Err(Error::DuplicateInstance(id));
        }
        if let Proposal::Multivalued(v) | Proposal::Vector(v) = &proposal {
            if v.len() > crate::consensus::MAX_PROPOSAL {
                return Err(Error::ProposalTooLarge {
                    len: v.len(),
                    max: crate::consensus::MAX_PROPOSAL,
                });
            }
        }
        self.emit(NodeEvent::Proposed {
            instance: id.clone(),
            value: proposal.to_bytes(),
        });
        let mut effects = Vec::new();
        let proto = match proposal {
            Proposal::Binary(b) => {
                let mut st = BinaryState::new(id.clone(), group, me);
                st.start(b, &self.key, &mut self.rng, &mut effects);
                Proto::Bin(st)
            }
            Proposal::Multivalued(v) => {
                let mut st = MvState::new(id.clone(), group, me, Predicate::Any);
                st.start(v, &self.key, &mut effects)?;
                Proto::Mv(st)
            }
            Proposal::Vector(v) => {
                let mut st = VecState::new(id.clone(), group, me)?;
                st.start(v, &self.key, &mut effects)?;
                Proto::Vec(st)
            }
        };
        self.register(now, id.clone(), proto, None, effects);
        Ok((id, self.finish(now)))
    }

    /// Asks reachable nodes for the decided value of `id`.
    pub fn query_result(&mut self, now: SimTime, id: &InstanceId) -> Vec<Output> {
        let ttl = self.cfg.membership.discovery_ttl;
        self.comm
            .send_flood(crate::comm::flood::BROADCAST, ttl, &encode_query(id));
        self.finish(now)
    }

    pub fn decision(&self, id: &InstanceId) -> Option<Vec<u8>> {
        self.results.get(id).map(|r| r.value.clone())
    }

    pub fn handle_receive(&mut self, now: SimTime, bytes: &[u8]) -> Vec<Output> {
        if let Some(d) = self.comm.on_receive(now, bytes) {
            self.on_delivery(now, d);
        }
        self.finish(now)
    }

    pub fn handle_timer(&mut self, now: SimTime, key: TimerKey) -> Vec<Output> {
        match self.armed.get(&key) {
            Some(at) if *at <= now => {
                self.armed.remove(&key);
            }
            _ => return Vec::new(),
        }
        match key {
            TimerKey::Comm => self.comm.on_tick(now),
            TimerKey::Heartbeat => self.membership.on_heartbeat_timer(now, &mut self.comm),
            TimerKey::Discovery => self.membership.on_discovery_timer(now, &mut self.comm),
            TimerKey::Sink => self.membership.on_sink_timer(now, &mut self.comm),
            TimerKey::Consensus => self.consensus_tick(now),
        }
        self.finish(now)
    }

    fn emit(&mut self, e: NodeEvent) {
        self.out.push(Output::Event(e));
    }

    fn consensus_tick(&mut self, now: SimTime) {
        let mut work = Vec::new();
        for (id, slot) in self.instances.iter_mut() {
            let mut effects = Vec::new();
            match &mut slot.proto {
                Proto::Bin(b) => b.on_tick(&mut effects),
                Proto::Vec(v) => v.on_tick(&mut effects),
                Proto::Mv(_) => {}
            }
            work.extend(effects.into_iter().map(|e| (id.clone(), e)));
        }
        self.run_effects(now, work);
    }

    fn wants_consensus_tick(&self) -> bool {
        self.instances.ids().any(|id| {
            self.instances.get(id).is_some_and(|s| match &s.proto {
                Proto::Bin(b) => b.wants_tick(),
                Proto::Vec(v) => v.wants_tick(),
                Proto::Mv(_) => false,
            })
        })
    }

    /// Drains the communication outbox and membership events and
    /// refreshes timers.
    fn finish(&mut self, now: SimTime) -> Vec<Output> {
        for ev in self.membership.drain_events() {
            let e = match ev {
                MembershipEvent::NeighborAdded(n) => NodeEvent::NeighborAdded(n),
                MembershipEvent::NeighborRemoved(n) => NodeEvent::NeighborRemoved(n),
                MembershipEvent::DiscoveryComplete { known, partial } => {
                    NodeEvent::DiscoveryComplete { known, partial }
                }
                MembershipEvent::SinkFormed(v) => NodeEvent::SinkFormed(v),
                MembershipEvent::SinkUnavailable { epoch } => NodeEvent::SinkUnavailable { epoch },
            };
            self.emit(e);
        }
        for t in self.comm.drain_outbox() {
            self.out.push(Output::Transmit(t));
        }
        let wanted = [
            (TimerKey::Comm, self.comm.next_wakeup(now)),
            (TimerKey::Heartbeat, self.membership.heartbeat_deadline()),
            (TimerKey::Discovery, self.membership.discovery_deadline()),
            (TimerKey::Sink, self.membership.sink_deadline()),
            (
                TimerKey::Consensus,
                match self.armed.get(&TimerKey::Consensus) {
                    Some(t) => Some(*t),
                    None => self
                        .wants_consensus_tick()
                        .then(|| now + self.cfg.consensus_tick),
                },
            ),
        ];
        for (key, at) in wanted {
            match at {
                Some(at) => {
                    let at = at.max(now);
                    if self.armed.get(&key) != Some(&at) {
                        self.armed.insert(key, at);
                        self.out.push(Output::Timer { key, at });
                    }
                }
                None => {
                    self.armed.remove(&key);
                }
            }
        }
        core::mem::take(&mut self.out)
    }

    fn on_delivery(&mut self, now: SimTime, d: Delivery) {
        let Some(ty) = MsgType::of(&d.payload) else {
            self.metrics.malformed += 1;
            return;
        };
        match ty {
            MsgType::Heartbeat
            | MsgType::GetNeighbors
            | MsgType::SetNeighbors
            | MsgType::KnownSet => {
                self.membership
                    .on_message(now, d.origin, d.via, &d.payload, &mut self.comm);
            }
            MsgType::BinPhase | MsgType::MvMsg | MsgType::VecRow => {
                self.on_consensus_msg(now, d.origin, d.via, d.payload);
            }
            MsgType::Decision => self.on_decision(now, d.origin, &d.payload),
            MsgType::ResultQuery => self.on_query(d.origin, &d.payload),
            MsgType::ResultReply => self.on_reply(now, &d.payload),
            MsgType::Ack => {}
        }
    }

    fn instance_of(payload: &[u8]) -> Option<InstanceId> {
        let mut r = crate::wire::Reader::new(payload);
        r.u8().ok()?;
        r.instance().ok()
    }

    fn on_consensus_msg(&mut self, now: SimTime, origin: NodeId, via: Via, payload: Vec<u8>) {
        let Some(id) = Self::instance_of(&payload) else {
            self.metrics.malformed += 1;
            return;
        };
        if !self.instances.contains(&id) {
            self.buffer(id, origin, via, payload);
            return;
        }
        let work = self.dispatch(&id, origin, via, payload);
        self.run_effects(now, work);
    }

    fn buffer(&mut self, id: InstanceId, origin: NodeId, via: Via, payload: Vec<u8>) {
        if self.pending_len >= self.cfg.pending_limit {
            self.metrics.pending_dropped += 1;
            return;
        }
        self.pending_len += 1;
        self.pending.entry(id).or_default().push(Buffered {
            origin,
            via,
            payload,
        });
    }

    fn reject(&mut self, id: &InstanceId, from: NodeId, reason: &'static str) {
        self.metrics.rejected += 1;
        self.emit(NodeEvent::Rejected {
            instance: id.clone(),
            from,
            reason,
        });
    }

    /// Hands one message to its instance and returns the resulting work.
    fn dispatch(
        &mut self,
        id: &InstanceId,
        origin: NodeId,
        via: Via,
        payload: Vec<u8>,
    ) -> Vec<(InstanceId, Effect)> {
        let mut effects = Vec::new();
        let verifier = self.comm.verifier_arc();
        let Some(slot) = self.instances.get_mut(id) else {
            return Vec::new();
        };
        let res: Result<Option<Vec<u8>>, &'static str> = match &mut slot.proto {
            Proto::Bin(st) => match BinMsg::decode(&payload) {
                Err(_) => Err("malformed"),
                Ok(m) if via != Via::Beb || m.sender != origin => Err("wrong origin"),
                Ok(m) if m.instance != *id => Err("malformed"),
                Ok(m) => st
                    .on_message(m, &self.key, &*verifier, &mut self.rng, &mut effects)
                    .map(|_| None)
                    .map_err(|e| match e {
                        crate::consensus::binary::BinReject::NotMember => "not a member",
                        crate::consensus::binary::BinReject::BadValue => "bad value",
                        crate::consensus::binary::BinReject::BadSignature => "bad signature",
                        crate::consensus::binary::BinReject::BadJustification => {
                            "bad justification"
                        }
                    }),
            },
            Proto::Mv(st) => match MvMsg::decode(&payload) {
                Err(_) => Err("malformed"),
                Ok(m) if via != Via::Rrb || m.sender != origin => Err("wrong origin"),
                Ok(m) if m.instance != *id => Err("malformed"),
                Ok(m) => {
                    let own = m.sender == self.key.node();
                    st.on_message(m, &self.key, &*verifier, &mut effects)
                        .map(|_| (!own).then(|| payload.clone()))
                        .map_err(|e| match e {
                            crate::consensus::multivalued::MvReject::NotMember => "not a member",
                            crate::consensus::multivalued::MvReject::BadPhase => "bad phase",
                            crate::consensus::multivalued::MvReject::BadValue => "bad value",
                            crate::consensus::multivalued::MvReject::BadSignature => {
                                "bad signature"
                            }
                            crate::consensus::multivalued::MvReject::BadJustification => {
                                "bad justification"
                            }
                        })
                }
            },
            Proto::Vec(st) => match VecRowMsg::decode(&payload) {
                Err(_) => Err("malformed"),
                Ok(m) if via != Via::Rrb || m.sender != origin => Err("wrong origin"),
                Ok(m) if m.instance != *id => Err("malformed"),
                Ok(m) => st
                    .on_message(&m, &*verifier, &mut effects)
                    .map(|_| None)
                    .map_err(|_| "bad row"),
            },
        };
        match res {
            Ok(Some(p)) => self.emit(NodeEvent::MvAccepted {
                from: origin,
                payload: p,
            }),
            Ok(None) => {}
            Err("wrong origin") => {
                self.metrics.wrong_origin += 1;
                self.reject(id, origin, "wrong origin");
            }
            Err(reason) => self.reject(id, origin, reason),
        }
        effects.into_iter().map(|e| (id.clone(), e)).collect()
    }

    fn register(
        &mut self,
        now: SimTime,
        id: InstanceId,
        proto: Proto,
        parent: Option<InstanceId>,
        effects: Vec<Effect>,
    ) {
        let slot = Slot {
            proto,
            parent,
            beb_envelope: None,
            reported: false,
        };
        if self.instances.register(id.clone(), slot).is_err() {
            return;
        }
        let mut work: Vec<(InstanceId, Effect)> =
            effects.into_iter().map(|e| (id.clone(), e)).collect();
        if let Some(buf) = self.pending.remove(&id) {
            self.pending_len -= buf.len();
            for b in buf {
                self.metrics.replayed += 1;
                // effects of earlier messages must run first
                let more = self.dispatch(&id, b.origin, b.via, b.payload);
                work.extend(more);
            }
        }
        self.run_effects(now, work);
    }

    fn run_effects(&mut self, now: SimTime, work: Vec<(InstanceId, Effect)>) {
        let mut queue: alloc::collections::VecDeque<(InstanceId, Effect)> = work.into();
        while let Some((id, e)) = queue.pop_front() {
            let Some(slot) = self.instances.get_mut(&id) else {
                continue;
            };
            let group = match &slot.proto {
                Proto::Bin(s) => s.group().clone(),
                Proto::Mv(s) => s.group().clone(),
                Proto::Vec(s) => s.group().clone(),
            };
            match e {
                Effect::Beb(p) => {
                    slot.beb_envelope = Some(self.comm.beb_broadcast(&p));
                }
                Effect::Rebroadcast => {
                    if let Some(env) = slot.beb_envelope.clone() {
                        self.comm.repeat_beb(env);
                    }
                }
                Effect::Rrb(p) => {
                    self.comm
                        .rrb_broadcast(now, &p, group.members(), &BTreeSet::new());
                }
                Effect::StartBinary { id: child, proposal } => {
                    let me = self.key.node();
                    let mut effects = Vec::new();
                    let mut st = BinaryState::new(child.clone(), group, me);
                    st.start(proposal, &self.key, &mut self.rng, &mut effects);
                    self.register(now, child, Proto::Bin(st), Some(id), effects);
                }
                Effect::StartMultivalued {
                    id: child,
                    proposal,
                } => {
                    let me = self.key.node();
                    let mut effects = Vec::new();
                    let pred = Predicate::VectorRow {
                        vid: id.clone(),
                        group: group.clone(),
                    };
                    let mut st = MvState::new(child.clone(), group, me, pred);
                    if st.start(proposal, &self.key, &mut effects).is_ok() {
                        self.register(now, child, Proto::Mv(st), Some(id), effects);
                    }
                }
                Effect::Decided => {
                    let more = self.on_decided(now, &id);
                    queue.extend(more);
                }
            }
        }
    }

    fn on_decided(&mut self, now: SimTime, id: &InstanceId) -> Vec<(InstanceId, Effect)> {
        let Some(slot) = self.instances.get_mut(id) else {
            return Vec::new();
        };
        if slot.reported {
            return Vec::new();
        }
        let (value, round, group) = match &slot.proto {
            Proto::Bin(s) => {
                let Some(b) = s.decided() else {
                    return Vec::new();
                };
                (encode_bit(b), s.decision_round().unwrap_or(0), s.group().clone())
            }
            Proto::Mv(s) => {
                let Some(v) = s.decided() else {
                    return Vec::new();
                };
                (encode_mv_outcome(v), 0, s.group().clone())
            }
            Proto::Vec(s) => {
                let Some(v) = s.decided() else {
                    return Vec::new();
                };
                (v.to_vec(), s.round() + 1, s.group().clone())
            }
        };
        slot.reported = true;
        let parent = slot.parent.clone();
        let mv_child = match &slot.proto {
            Proto::Mv(s) => Some(s.binary_id()),
            _ => None,
        };
        let round = if let Some(bid) = mv_child {
            self.instances
                .get(&bid)
                .and_then(|c| match &c.proto {
                    Proto::Bin(b) => b.decision_round(),
                    _ => None,
                })
                .unwrap_or(0)
        } else {
            round
        };
        self.emit(NodeEvent::Decided {
            instance: id.clone(),
            value: value.clone(),
            round,
            nested: parent.is_some(),
        });
        let mut effects = Vec::new();
        match parent {
            Some(pid) => {
                let child_bin = match self.instances.get(id).map(|s| &s.proto) {
                    Some(Proto::Bin(b)) => b.decided(),
                    _ => None,
                };
                let child_mv = match self.instances.get(id).map(|s| &s.proto) {
                    Some(Proto::Mv(m)) => m.decided().cloned(),
                    _ => None,
                };
                if let Some(p) = self.instances.get_mut(&pid) {
                    match &mut p.proto {
                        Proto::Mv(m) => {
                            if let Some(b) = child_bin {
                                m.on_binary(b, &self.key, &mut effects);
                            }
                        }
                        Proto::Vec(v) => {
                            if let Some(r) = child_mv {
                                v.on_mv(id.sub_round.unwrap_or(0), r, &mut effects);
                            }
                        }
                        Proto::Bin(_) => {}
                    }
                }
                return effects.into_iter().map(|e| (pid.clone(), e)).collect();
            }
            None => {
                self.results.insert(id.clone(), value.clone(), now);
                self.disseminate(now, id, value, &group);
            }
        }
        Vec::new()
    }

    fn disseminate(&mut self, now: SimTime, id: &InstanceId, value: Vec<u8>, group: &Group) {
        let msg = DecisionMsg::new(
            &self.key,
            id.clone(),
            value,
            group.members().to_vec(),
            group.f(),
        );
        let verifier = self.comm.verifier_arc();
        self.collector
            .on_decision(&msg, group.members(), group.f(), &*verifier);
        if !self.cfg.disseminate {
            return;
        }
        let outsiders: BTreeSet<NodeId> = self
            .membership
            .known()
            .iter()
            .copied()
            .filter(|n| !group.contains(*n))
            .collect();
        if outsiders.is_empty() {
            return;
        }
        self.comm.rrb_broadcast(now, &msg.encode(), &[], &outsiders);
    }

    /// Group used to judge decisions of others: the static group, or the
    /// locally computed sink.
    fn judging_group(&self) -> Option<(Vec<NodeId>, usize)> {
        if let Some(g) = &self.static_group {
            return Some((g.members().to_vec(), g.f()));
        }
        let s = self.membership.sink()?;
        Some((s.members.clone(), self.cfg.membership.f))
    }

    fn on_decision(&mut self, now: SimTime, origin: NodeId, payload: &[u8]) {
        let Ok(msg) = DecisionMsg::decode(payload) else {
            self.metrics.malformed += 1;
            return;
        };
        if msg.signer != origin {
            self.metrics.wrong_origin += 1;
            return;
        }
        let Some((members, f)) = self.judging_group() else {
            return;
        };
        let verifier = self.comm.verifier_arc();
        if let Some(cert) = self.collector.on_decision(&msg, &members, f, &*verifier) {
            self.accept(now, cert.instance, cert.value);
        }
    }

    fn accept(&mut self, now: SimTime, id: InstanceId, value: Vec<u8>) {
        let own = self.instances.get(&id).is_some_and(|s| s.reported);
        if !own && self.results.insert(id.clone(), value.clone(), now) {
            self.emit(NodeEvent::ResultAccepted {
                instance: id,
                value,
            });
        }
    }

    fn on_query(&mut self, origin: NodeId, payload: &[u8]) {
        let Ok(id) = decode_query(payload) else {
            return;
        };
        let Some((members, f)) = self.judging_group() else {
            return;
        };
        let ttl = self.cfg.membership.discovery_ttl;
        if let Some(cert) = self.collector.accepted(&id).cloned() {
            let reply = encode_reply(&cert, &members, f);
            self.comm.send_flood(origin, ttl, &reply);
            return;
        }
        // Without a certificate a member still vouches for its own decision;
        // the asker needs f + 1 of these.
        let own = self.instances.get(&id).is_some_and(|s| s.reported && s.parent.is_none());
        if !own || !members.contains(&self.id()) {
            return;
        }
        if let Some(value) = self.local_decision(&id) {
            let msg = DecisionMsg::new(&self.key, id, value, members, f);
            self.comm.send_flood(origin, ttl, &msg.encode());
        }
    }

    fn on_reply(&mut self, now: SimTime, payload: &[u8]) {
        let Ok((cert, group, f)) = decode_reply(payload) else {
            return;
        };
        // Judge against the local view when there is one.
        let (members, f) = self.judging_group().unwrap_or((group, f));
        let verifier = self.comm.verifier_arc();
        if cert.verify(&members, f, &*verifier) {
            self.collector.insert_certificate(cert.clone());
            self.accept(now, cert.instance, cert.value);
        }
    }

    /// Decided value of an instance run locally, nested ones included.
    pub fn local_decision(&self, id: &InstanceId) -> Option<Vec<u8>> {
        let slot = self.instances.get(id)?;
        match &slot.proto {
            Proto::Bin(s) => s.decided().map(encode_bit),
            Proto::Mv(s) => s.decided().map(encode_mv_outcome),
            Proto::Vec(s) => s.decided().map(|v| v.to_vec()),
        }
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn pending_count(&self) -> usize {
        self.pending_len
    }

    /// Validation counters summed over local instances: (accepted, rejected).
    pub fn validation_counts(&self) -> (u64, u64) {
        let mut acc = (0, 0);
        for id in self.instances.ids() {
            if let Some(s) = self.instances.get(id) {
                let (a, r) = match &s.proto {
                    Proto::Bin(b) => (b.stats.accepted, b.stats.rejected),
                    Proto::Mv(m) => (m.stats.accepted, m.stats.rejected),
                    Proto::Vec(v) => (v.stats.accepted, v.stats.rejected),
                };
                acc.0 += a;
                acc.1 += r;
            }
        }
        acc
    }
}
