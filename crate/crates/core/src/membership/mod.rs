//! Group membership: neighbor detection through heartbeats, network-graph
//! discovery by exchanging neighbor lists, and sink formation.

pub mod discovery;
pub mod neighbors;
pub mod sink;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::comm::{CommLayer, Via};
use crate::id::{NodeId, SimTime};
use crate::wire::{MsgType, Reader, WireError, Writer};

pub use discovery::DiscoveryState;
pub use neighbors::NeighborTable;
pub use sink::{compute_sink, greedy_clique, KnownSet, SinkView};

#[derive(Clone, Debug)]
pub struct MembershipConfig {
    pub f: usize,
    pub heartbeat_interval: SimTime,
    /// Neighbors silent for more than `expiry_factor` intervals are removed.
    pub expiry_factor: u64,
    /// Discovery starts this many heartbeat intervals after start.
    pub discovery_delay: u64,
    /// Discovery gives up (partial result) after this many intervals.
    pub discovery_deadline: u64,
    /// After announcing its known set a node waits at most this many
    /// intervals for the other announcements before computing the sink.
    pub sink_wait: u64,
    pub discovery_ttl: u8,
    pub sink_cap: Option<usize>,
}

impl Default for MembershipConfig {
    fn default() -> Self {
        MembershipConfig {
            f: 1,
            heartbeat_interval: 100,
            expiry_factor: 5,
            discovery_delay: 2,
            discovery_deadline: 20,
            sink_wait: 10,
            discovery_ttl: 8,
            sink_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MembershipMsg {
    Heartbeat,
    GetNeighbors { targets: Vec<NodeId> },
    SetNeighbors { requesters: Vec<NodeId>, neighbors: Vec<NodeId> },
    KnownSet(KnownSet),
}

impl MembershipMsg {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            MembershipMsg::Heartbeat => {
                w.u8(MsgType::Heartbeat as u8);
            }
            MembershipMsg::GetNeighbors { targets } => {
                w.u8(MsgType::GetNeighbors as u8).nodes(targets);
            }
            MembershipMsg::SetNeighbors {
                requesters,
                neighbors,
            } => {
                w.u8(MsgType::SetNeighbors as u8)
                    .nodes(requesters)
                    .nodes(neighbors);
            }
            MembershipMsg::KnownSet(ks) => {
                w.u8(MsgType::KnownSet as u8)
                    .u32(ks.epoch)
                    .nodes(&ks.known)
                    .nodes(&ks.neighbors);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let code = r.u8()?;
        let msg = match MsgType::from_code(code) {
            Some(MsgType::Heartbeat) => MembershipMsg::Heartbeat,
            Some(MsgType::GetNeighbors) => MembershipMsg::GetNeighbors { targets: r.nodes()? },
            Some(MsgType::SetNeighbors) => MembershipMsg::SetNeighbors {
                requesters: r.nodes()?,
                neighbors: r.nodes()?,
            },
            Some(MsgType::KnownSet) => MembershipMsg::KnownSet(KnownSet {
                epoch: r.u32()?,
                known: r.nodes()?,
                neighbors: r.nodes()?,
            }),
            _ => return Err(WireError::UnknownTag(code)),
        };
        r.finish()?;
        Ok(msg)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MembershipEvent {
    NeighborAdded(NodeId),
    NeighborRemoved(NodeId),
    DiscoveryComplete { known: Vec<NodeId>, partial: bool },
    SinkFormed(SinkView),
    SinkUnavailable { epoch: u32 },
}

#[derive(Debug, Clone)]
pub struct Membership {
    me: NodeId,
    cfg: MembershipConfig,
    pub table: NeighborTable,
    pub discovery: DiscoveryState,
    announced: BTreeMap<NodeId, KnownSet>,
    epoch: u32,
    announced_epoch: Option<u32>,
    computed_epoch: Option<u32>,
    sink: Option<SinkView>,
    heartbeat_at: Option<SimTime>,
    discovery_at: Option<SimTime>,
    discovery_deadline: SimTime,
    sink_deadline: Option<SimTime>,
    events: Vec<MembershipEvent>,
}

impl Membership {
    pub fn new(me: NodeId, cfg: MembershipConfig) -> Self {
        Membership {
            me,
            cfg,
            table: NeighborTable::new(),
            discovery: DiscoveryState::default(),
            announced: BTreeMap::new(),
            epoch: 0,
            announced_epoch: None,
            computed_epoch: None,
            sink: None,
            heartbeat_at: None,
            discovery_at: None,
            discovery_deadline: 0,
            sink_deadline: None,
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &MembershipConfig {
        &self.cfg
    }

    pub fn is_started(&self) -> bool {
        self.heartbeat_at.is_some()
    }

    pub fn sink(&self) -> Option<&SinkView> {
        self.sink.as_ref()
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn known(&self) -> &BTreeSet<NodeId> {
        &self.discovery.known
    }

    pub fn drain_events(&mut self) -> Vec<MembershipEvent> {
        core::mem::take(&mut self.events)
    }

    pub fn heartbeat_deadline(&self) -> Option<SimTime> {
        self.heartbeat_at
    }

    pub fn discovery_deadline(&self) -> Option<SimTime> {
        self.discovery_at
    }

    pub fn sink_deadline(&self) -> Option<SimTime> {
        self.sink_deadline
    }

    fn expiry_window(&self) -> SimTime {
        self.cfg.expiry_factor * self.cfg.heartbeat_interval
    }

    /// Starts heartbeats and schedules discovery.
    pub fn start(&mut self, now: SimTime, comm: &mut CommLayer) {
        if self.is_started() {
            return;
        }
        let iv = self.cfg.heartbeat_interval;
        comm.beb_broadcast(&MembershipMsg::Heartbeat.encode());
        self.heartbeat_at = Some(now + iv);
        self.discovery_at = Some(now + self.cfg.discovery_delay * iv);
        self.discovery_deadline = now + self.cfg.discovery_deadline * iv;
    }

    pub fn on_heartbeat_timer(&mut self, now: SimTime, comm: &mut CommLayer) {
        comm.beb_broadcast(&MembershipMsg::Heartbeat.encode());
        self.heartbeat_at = Some(now + self.cfg.heartbeat_interval);
        let gone = self.table.expire(now, self.expiry_window());
        let mut sink_hit = false;
        for n in gone {
            self.events.push(MembershipEvent::NeighborRemoved(n));
            if self.sink.as_ref().is_some_and(|s| s.contains(n)) {
                sink_hit = true;
            }
            if self.discovery.complete {
                self.discovery.forget(n);
                self.announced.remove(&n);
                comm.forget_target(n);
                comm.graph_mut().remove_node(n);
            }
        }
        if sink_hit {
            self.epoch += 1;
            self.sink = None;
            self.announce(now, comm);
        }
    }

    pub fn on_discovery_timer(&mut self, now: SimTime, comm: &mut CommLayer) {
        if self.discovery.complete {
            self.discovery_at = None;
            return;
        }
        if !self.discovery.started {
            let nbrs = self.table.ids();
            self.discovery.start(self.me, &nbrs);
            if nbrs.is_empty() {
                self.finish_discovery(now, comm, true);
                return;
            }
        } else if now >= self.discovery_deadline {
            self.finish_discovery(now, comm, true);
            return;
        }
        let pending: Vec<NodeId> = self.discovery.pending.iter().copied().collect();
        self.query(&pending, comm);
        self.discovery_at = Some(now + self.cfg.heartbeat_interval);
        self.check_discovery(now, comm);
    }

    pub fn on_sink_timer(&mut self, now: SimTime, _comm: &mut CommLayer) {
        self.try_compute(now, true);
    }

    fn query(&mut self, targets: &[NodeId], comm: &mut CommLayer) {
        let (near, far): (Vec<NodeId>, Vec<NodeId>) =
            targets.iter().partition(|n| self.table.contains(**n));
        if !near.is_empty() {
            self.discovery.gets_sent += 1;
            comm.beb_broadcast(&MembershipMsg::GetNeighbors { targets: near }.encode());
        }
        for t in far {
            self.discovery.gets_sent += 1;
            let msg = MembershipMsg::GetNeighbors { targets: alloc::vec![t] }.encode();
            comm.send_flood(t, self.cfg.discovery_ttl, &msg);
        }
    }

    fn check_discovery(&mut self, now: SimTime, comm: &mut CommLayer) {
        if self.discovery.started && !self.discovery.complete && self.discovery.pending.is_empty()
        {
            self.finish_discovery(now, comm, false);
        }
    }

    fn finish_discovery(&mut self, now: SimTime, comm: &mut CommLayer, partial: bool) {
        let partial = partial || self.discovery.known.len() <= 1;
        self.discovery.complete = true;
        self.discovery.partial = partial;
        self.discovery_at = None;
        self.events.push(MembershipEvent::DiscoveryComplete {
            known: self.discovery.known.iter().copied().collect(),
            partial,
        });
        self.announce(now, comm);
    }

    fn announce(&mut self, now: SimTime, comm: &mut CommLayer) {
        let ks = KnownSet {
            epoch: self.epoch,
            known: self.discovery.known.iter().copied().collect(),
            neighbors: self.table.ids(),
        };
        let targets: BTreeSet<NodeId> = self.discovery.known.clone();
        comm.rrb_broadcast(now, &MembershipMsg::KnownSet(ks.clone()).encode(), &[], &targets);
        self.announced.insert(self.me, ks);
        self.announced_epoch = Some(self.epoch);
        self.sink_deadline = Some(now + self.cfg.sink_wait * self.cfg.heartbeat_interval);
        self.try_compute(now, false);
    }

    fn try_compute(&mut self, now: SimTime, deadline: bool) {
        if self.announced_epoch != Some(self.epoch) || self.computed_epoch == Some(self.epoch) {
            return;
        }
        let epoch = self.epoch;
        let ready = self
            .discovery
            .known
            .iter()
            .all(|j| self.announced.get(j).is_some_and(|ks| ks.epoch >= epoch));
        let expired = self.sink_deadline.is_some_and(|t| now >= t);
        if !ready && !(deadline && expired) {
            return;
        }
        self.computed_epoch = Some(epoch);
        self.sink_deadline = None;
        match compute_sink(
            self.me,
            &self.discovery.known,
            &self.announced,
            self.cfg.f,
            self.cfg.sink_cap,
        ) {
            Some(members) => {
                let view = SinkView { epoch, members };
                self.sink = Some(view.clone());
                self.events.push(MembershipEvent::SinkFormed(view));
            }
            None => {
                self.sink = None;
                self.events.push(MembershipEvent::SinkUnavailable { epoch });
            }
        }
    }

    /// Handles a delivered membership message. Returns false if the payload
    /// is not a membership message.
    pub fn on_message(
        &mut self,
        now: SimTime,
        from: NodeId,
        via: Via,
        payload: &[u8],
        comm: &mut CommLayer,
    ) -> bool {
        let Ok(msg) = MembershipMsg::decode(payload) else {
            return false;
        };
        match msg {
            MembershipMsg::Heartbeat => {
                if via == Via::Beb && self.table.on_heartbeat(from, now) {
                    self.events.push(MembershipEvent::NeighborAdded(from));
                }
            }
            MembershipMsg::GetNeighbors { targets } => {
                if targets.contains(&self.me) {
                    let reply = MembershipMsg::SetNeighbors {
                        requesters: alloc::vec![from],
                        neighbors: self.table.ids(),
                    }
                    .encode();
                    if via == Via::Beb {
                        comm.beb_broadcast(&reply);
                    } else {
                        comm.send_flood(from, self.cfg.discovery_ttl, &reply);
                    }
                }
            }
            MembershipMsg::SetNeighbors {
                requesters,
                neighbors,
            } => {
                if requesters.contains(&self.me)
                    && self.discovery.started
                    && !self.discovery.complete
                {
                    for n in &neighbors {
                        comm.graph_mut().add_edge(from, *n);
                    }
                    let fresh = self.discovery.on_set(from, &neighbors);
                    if !fresh.is_empty() {
                        self.query(&fresh, comm);
                    }
                    self.check_discovery(now, comm);
                }
            }
            MembershipMsg::KnownSet(ks) => {
                if via == Via::Rrb {
                    let newer = self
                        .announced
                        .get(&from)
                        .is_none_or(|old| ks.epoch >= old.epoch);
                    if newer && from != self.me {
                        self.announced.insert(from, ks);
                        self.try_compute(now, false);
                    }
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_round_trip() {
        let msgs = [
            MembershipMsg::Heartbeat,
            MembershipMsg::GetNeighbors {
                targets: alloc::vec![NodeId(1), NodeId(2)],
            },
            MembershipMsg::SetNeighbors {
                requesters: alloc::vec![NodeId(3)],
                neighbors: alloc::vec![NodeId(0)],
            },
            MembershipMsg::KnownSet(KnownSet {
                epoch: 2,
                known: alloc::vec![NodeId(0), NodeId(1)],
                neighbors: alloc::vec![NodeId(1)],
            }),
        ];
        for m in msgs {
            assert_eq!(MembershipMsg::decode(&m.encode()).unwrap(), m);
        }
        assert!(MembershipMsg::decode(&[MsgType::BinPhase as u8]).is_err());
    }
}
