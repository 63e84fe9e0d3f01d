//! Deterministic discrete-event simulator of a shared wireless medium.
//!
//! A transmission reaches every live node within radio range of the sender
//! (unit disk model), subject to partitions and the link model of each
//! sender/receiver pair. Events are ordered by `(time, target, sequence)`;
//! all randomness comes from one seeded ChaCha8 stream, so a run is a pure
//! function of its configuration and seed.

pub mod link;
pub mod topology;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sitan_core::auth::short_digest;
use sitan_core::node::{Node, Output};
use sitan_core::{NodeId, SimTime, TimerKey};

use crate::trace::{Entry, Record};
pub use link::LinkModel;
pub use topology::{Layout, MobilityState, Position, RandomWaypoint};

/// Something the simulator can run at a node position.
pub trait Host {
    fn id(&self) -> NodeId;
    fn handle_receive(&mut self, now: SimTime, bytes: &[u8]) -> Vec<Output>;
    fn handle_timer(&mut self, now: SimTime, key: TimerKey) -> Vec<Output>;
    /// Extra trace entries, such as messages an adversary injected.
    fn drain_notes(&mut self) -> Vec<Entry> {
        Vec::new()
    }
    fn is_correct(&self) -> bool {
        true
    }
    /// A second version of an outgoing transmission, delivered instead of
    /// the original to receivers with odd ids. Models a sender that
    /// addresses different neighbors with different messages.
    fn alternate(&mut self, _bytes: &[u8]) -> Option<Arc<[u8]>> {
        None
    }
}

impl Host for Node {
    fn id(&self) -> NodeId {
        Node::id(self)
    }

    fn handle_receive(&mut self, now: SimTime, bytes: &[u8]) -> Vec<Output> {
        Node::handle_receive(self, now, bytes)
    }

    fn handle_timer(&mut self, now: SimTime, key: TimerKey) -> Vec<Output> {
        Node::handle_timer(self, now, key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceLevel {
    /// Protocol events only.
    Events,
    /// Events plus every transmission and reception.
    Full,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    pub layout: Layout,
    /// Radio range in meters.
    pub range: f64,
    pub link: LinkModel,
    pub mobility: Option<RandomWaypoint>,
    pub trace: TraceLevel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            layout: Layout::default(),
            range: 50.0,
            link: LinkModel::default(),
            mobility: None,
            trace: TraceLevel::Events,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum What {
    Deliver { from: u32, bytes: Arc<[u8]> },
    Timer(TimerKey),
    Move,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Scheduled {
    time: SimTime,
    target: u32,
    seq: u64,
    what: What,
}

impl Ord for Scheduled {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.time, self.target, self.seq).cmp(&(o.time, o.target, o.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimStats {
    pub sends: u64,
    pub sends_by_kind: BTreeMap<&'static str, u64>,
    /// Keyed by upper-layer message name ("-" for none).
    pub sends_by_msg: BTreeMap<&'static str, u64>,
    pub sends_by_node: Vec<u64>,
    pub receptions: u64,
    pub lost: u64,
    pub duplicated: u64,
    pub corrupted: u64,
    pub bytes_sent: u64,
}

pub struct Simulator<H> {
    cfg: SimConfig,
    now: SimTime,
    hosts: Vec<H>,
    positions: Vec<Position>,
    mobility: Option<MobilityState>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    rng: ChaCha8Rng,
    crashed: Vec<bool>,
    partition: Option<Vec<u32>>,
    overrides: BTreeMap<(u32, u32), LinkModel>,
    pub stats: SimStats,
    trace: Vec<Record>,
}

impl<H: Host> Simulator<H> {
    /// Hosts must be given in id order, host `i` having id `i`.
    pub fn new(cfg: SimConfig, hosts: Vec<H>) -> Self {
        for (i, h) in hosts.iter().enumerate() {
            assert_eq!(h.id(), NodeId(i as u32), "hosts must be in id order");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = hosts.len();
        let positions = cfg.layout.place(n, &mut rng);
        let mobility = cfg
            .mobility
            .clone()
            .map(|m| MobilityState::new(m, n, &mut rng));
        let mut sim = Simulator {
            now: 0,
            positions,
            mobility,
            queue: BinaryHeap::new(),
            seq: 0,
            rng,
            crashed: vec![false; n],
            partition: None,
            overrides: BTreeMap::new(),
            stats: SimStats {
                sends_by_node: vec![0; n],
                ..SimStats::default()
            },
            trace: Vec::new(),
            hosts,
            cfg,
        };
        if let Some(m) = &sim.mobility {
            let step = m.model.step;
            sim.schedule(step, 0, What::Move);
        }
        sim
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.hosts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hosts.is_empty()
    }

    pub fn host(&self, i: usize) -> &H {
        &self.hosts[i]
    }

    pub fn host_mut(&mut self, i: usize) -> &mut H {
        &mut self.hosts[i]
    }

    pub fn hosts(&self) -> &[H] {
        &self.hosts
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn trace(&self) -> &[Record] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.trace)
    }

    pub fn is_crashed(&self, i: usize) -> bool {
        self.crashed[i]
    }

    /// Stops a node: it no longer receives, transmits or runs timers.
    pub fn crash(&mut self, i: usize) {
        if !self.crashed[i] {
            self.crashed[i] = true;
            self.record(i as u32, None, Entry::Crash);
        }
    }

    /// Splits the network: nodes with different labels cannot hear each
    /// other. `None` heals the partition.
    pub fn set_partition(&mut self, labels: Option<Vec<u32>>) {
        if let Some(l) = &labels {
            assert_eq!(l.len(), self.hosts.len());
        }
        self.partition = labels;
    }

    /// Link behaviour for copies sent by `from` to `to`.
    pub fn set_link(&mut self, from: NodeId, to: NodeId, model: LinkModel) {
        self.overrides.insert((from.0, to.0), model);
    }

    pub fn in_range(&self, a: usize, b: usize) -> bool {
        self.positions[a].distance(&self.positions[b]) <= self.cfg.range
    }

    /// Nodes that currently hear a transmission of `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.hosts.len())
            .filter(|j| *j != i && self.reachable(i, *j))
            .collect()
    }

    fn reachable(&self, a: usize, b: usize) -> bool {
        if self.crashed[b] || !self.in_range(a, b) {
            return false;
        }
        match &self.partition {
            Some(p) => p[a] == p[b],
            None => true,
        }
    }

    fn schedule(&mut self, time: SimTime, target: u32, what: What) {
        self.seq += 1;
        self.queue.push(Reverse(Scheduled {
            time,
            target,
            seq: self.seq,
            what,
        }));
    }

    fn record(&mut self, node: u32, digest: Option<u64>, entry: Entry) {
        self.trace.push(Record {
            time: self.now,
            node: NodeId(node),
            digest,
            entry,
        });
    }

    /// Runs `f` on host `i` at the current time and carries out its outputs.
    pub fn call<R>(&mut self, i: usize, f: impl FnOnce(&mut H, SimTime) -> (R, Vec<Output>)) -> R {
        let now = self.now;
        let (r, outs) = f(&mut self.hosts[i], now);
        self.apply(i, outs);
        r
    }

    /// Carries out outputs produced by host `i`. Returns how many new trace
    /// records were appended.
    pub fn apply(&mut self, i: usize, outputs: Vec<Output>) -> usize {
        let before = self.trace.len();
        let notes = self.hosts[i].drain_notes();
        for n in notes {
            self.record(i as u32, None, n);
        }
        if self.crashed[i] {
            return self.trace.len() - before;
        }
        for o in outputs {
            match o {
                Output::Transmit(t) => self.transmit(i, t),
                Output::Timer { key, at } => self.schedule(at.max(self.now), i as u32, What::Timer(key)),
                Output::Event(e) => self.record(i as u32, None, Entry::from_event(&e)),
            }
        }
        self.trace.len() - before
    }

    fn transmit(&mut self, i: usize, t: sitan_core::comm::Transmission) {
        let kind = t.kind.name();
        let msg = t.msg.map_or("-", |m| m.name());
        self.stats.sends += 1;
        self.stats.bytes_sent += t.bytes.len() as u64;
        *self.stats.sends_by_kind.entry(kind).or_default() += 1;
        *self.stats.sends_by_msg.entry(msg).or_default() += 1;
        self.stats.sends_by_node[i] += 1;
        if self.cfg.trace == TraceLevel::Full {
            let d = short_digest(&t.bytes);
            self.record(
                i as u32,
                Some(d),
                Entry::Send {
                    via: kind.to_string(),
                    msg: msg.to_string(),
                    len: t.bytes.len(),
                },
            );
        }
        let alt = self.hosts[i].alternate(&t.bytes);
        let bytes: Arc<[u8]> = t.bytes.into();
        for j in 0..self.hosts.len() {
            if j == i || !self.reachable(i, j) {
                continue;
            }
            let model = self
                .overrides
                .get(&(i as u32, j as u32))
                .unwrap_or(&self.cfg.link)
                .clone();
            if model.loss > 0.0 && self.rng.random_bool(model.loss) {
                self.stats.lost += 1;
                continue;
            }
            let bytes = match &alt {
                Some(a) if j % 2 == 1 => a,
                _ => &bytes,
            };
            let copies = if model.duplicate > 0.0 && self.rng.random_bool(model.duplicate) {
                self.stats.duplicated += 1;
                2
            } else {
                1
            };
            for _ in 0..copies {
                let delay = self.rng.random_range(model.delay_min..=model.delay_max);
                let payload = if model.corrupt > 0.0 && self.rng.random_bool(model.corrupt) {
                    self.stats.corrupted += 1;
                    let mut v = bytes.to_vec();
                    let at = self.rng.random_range(0..v.len());
                    v[at] ^= 0x40;
                    v.into()
                } else {
                    bytes.clone()
                };
                self.schedule(
                    self.now + delay,
                    j as u32,
                    What::Deliver {
                        from: i as u32,
                        bytes: payload,
                    },
                );
            }
        }
    }

    /// Processes the next event if it is due by `deadline`. Returns false
    /// when nothing is left before the deadline.
    pub fn step(&mut self, deadline: SimTime) -> bool {
        let Some(Reverse(next)) = self.queue.peek() else {
            return false;
        };
        if next.time > deadline {
            return false;
        }
        let Reverse(ev) = self.queue.pop().expect("peeked");
        self.now = ev.time;
        let t = ev.target as usize;
        match ev.what {
            What::Move => {
                if let Some(m) = &mut self.mobility {
                    m.step(&mut self.positions, &mut self.rng);
                    let step = m.model.step;
                    self.schedule(self.now + step, 0, What::Move);
                }
            }
            What::Timer(key) => {
                if !self.crashed[t] {
                    let outs = self.hosts[t].handle_timer(self.now, key);
                    self.apply(t, outs);
                }
            }
            What::Deliver { from, bytes } => {
                if !self.crashed[t] {
                    self.stats.receptions += 1;
                    if self.cfg.trace == TraceLevel::Full {
                        self.record(
                            ev.target,
                            Some(short_digest(&bytes)),
                            Entry::Recv {
                                from: NodeId(from),
                                len: bytes.len(),
                            },
                        );
                    }
                    let outs = self.hosts[t].handle_receive(self.now, &bytes);
                    self.apply(t, outs);
                }
            }
        }
        true
    }

    /// Runs until `deadline` or until `stop` returns true for a new trace
    /// record. Returns true when stopped by `stop`.
    pub fn run_until(&mut self, deadline: SimTime, mut stop: impl FnMut(&Record) -> bool) -> bool {
        loop {
            let seen = self.trace.len();
            if !self.step(deadline) {
                if self.now < deadline {
                    self.now = deadline;
                }
                return false;
            }
            if self.trace[seen..].iter().any(&mut stop) {
                return true;
            }
        }
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sitan_core::comm::{SendKind, Transmission};

    /// Echoes every reception count and transmits once on its first timer.
    struct Probe {
        id: NodeId,
        got: Vec<(SimTime, Vec<u8>)>,
    }

    impl Host for Probe {
        fn id(&self) -> NodeId {
            self.id
        }
        fn handle_receive(&mut self, now: SimTime, bytes: &[u8]) -> Vec<Output> {
            self.got.push((now, bytes.to_vec()));
            vec![]
        }
        fn handle_timer(&mut self, _now: SimTime, _key: TimerKey) -> Vec<Output> {
            vec![Output::Transmit(Transmission {
                bytes: vec![self.id.0 as u8; 8],
                kind: SendKind::Beb,
                msg: None,
            })]
        }
    }

    fn probes(n: u32) -> Vec<Probe> {
        (0..n)
            .map(|i| Probe {
                id: NodeId(i),
                got: vec![],
            })
            .collect()
    }

    fn fire_all(sim: &mut Simulator<Probe>) {
        for i in 0..sim.len() {
            sim.apply(
                i,
                vec![Output::Timer {
                    key: TimerKey::Comm,
                    at: 1,
                }],
            );
        }
    }

    #[test]
    fn unit_disk_reception() {
        let cfg = SimConfig {
            layout: Layout::Explicit {
                positions: vec![
                    Position { x: 0.0, y: 0.0 },
                    Position { x: 10.0, y: 0.0 },
                    Position { x: 22.0, y: 0.0 },
                ],
            },
            range: 15.0,
            ..SimConfig::default()
        };
        let mut sim = Simulator::new(cfg, probes(3));
        fire_all(&mut sim);
        sim.run_until(100, |_| false);
        assert_eq!(sim.host(0).got.len(), 1);
        assert_eq!(sim.host(1).got.len(), 2);
        assert_eq!(sim.host(2).got.len(), 1);
        for (t, _) in &sim.host(1).got {
            assert!((2..=6).contains(t));
        }
    }

    #[test]
    fn loss_partition_and_crash() {
        let mut sim = Simulator::new(SimConfig::default(), probes(4));
        sim.set_partition(Some(vec![0, 0, 1, 1]));
        sim.crash(1);
        fire_all(&mut sim);
        sim.run_until(100, |_| false);
        assert!(sim.host(1).got.is_empty());
        assert_eq!(sim.host(0).got.len(), 0);
        assert_eq!(sim.host(2).got.len(), 1);

        let cfg = SimConfig {
            link: LinkModel::lossy(1.0),
            ..SimConfig::default()
        };
        let mut sim = Simulator::new(cfg, probes(3));
        fire_all(&mut sim);
        sim.run_until(100, |_| false);
        assert_eq!(sim.stats.lost, 6);
    }

    #[test]
    fn same_seed_same_schedule() {
        let run = || {
            let cfg = SimConfig {
                seed: 9,
                link: LinkModel {
                    duplicate: 0.3,
                    corrupt: 0.2,
                    loss: 0.2,
                    ..LinkModel::default()
                },
                ..SimConfig::default()
            };
            let mut sim = Simulator::new(cfg, probes(6));
            fire_all(&mut sim);
            sim.run_until(100, |_| false);
            sim.hosts().iter().map(|h| h.got.clone()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
