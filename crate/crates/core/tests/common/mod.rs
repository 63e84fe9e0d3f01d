//! Minimal event loop for driving nodes over an explicit adjacency matrix.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::Arc;

use sitan_core::{
    KeyDirectory, Node, NodeConfig, NodeEvent, NodeId, Output, SimTime, TimerKey, Verifier,
};

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
enum What {
    Deliver(Vec<u8>),
    Timer(TimerKey),
}

pub struct Mesh {
    pub nodes: Vec<Node>,
    pub adj: Vec<Vec<bool>>,
    pub down: BTreeSet<usize>,
    pub events: Vec<(NodeId, SimTime, NodeEvent)>,
    pub sends: u64,
    queue: BinaryHeap<Reverse<(SimTime, u64, usize, What)>>,
    seq: u64,
    now: SimTime,
}

impl Mesh {
    pub fn complete(n: usize, f: usize, seed: u64) -> Self {
        let adj = (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect();
        Self::with_adjacency(adj, f, seed, true)
    }

    pub fn with_adjacency(adj: Vec<Vec<bool>>, f: usize, seed: u64, static_group: bool) -> Self {
        let n = adj.len();
        let (keys, dir) = KeyDirectory::simulated(n, seed);
        let dir: Arc<dyn Verifier> = Arc::new(dir);
        let members: Vec<NodeId> = (0..n as u32).map(NodeId).collect();
        let nodes = keys
            .into_iter()
            .map(|k| {
                let mut cfg = NodeConfig::default().with_f(f);
                cfg.seed = seed ^ u64::from(k.node().0);
                let mut node = Node::new(k, dir.clone(), cfg);
                if static_group {
                    node.set_static_group(members.clone(), f).unwrap();
                }
                node
            })
            .collect();
        Mesh {
            nodes,
            adj,
            down: BTreeSet::new(),
            events: Vec::new(),
            sends: 0,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn apply(&mut self, i: usize, outputs: Vec<Output>) {
        let me = self.nodes[i].id();
        for o in outputs {
            match o {
                Output::Transmit(t) => {
                    self.sends += 1;
                    for j in 0..self.nodes.len() {
                        if self.adj[i][j] {
                            self.push(self.now + 1, j, What::Deliver(t.bytes.clone()));
                        }
                    }
                }
                Output::Timer { key, at } => self.push(at.max(self.now), i, What::Timer(key)),
                Output::Event(e) => self.events.push((me, self.now, e)),
            }
        }
    }

    fn push(&mut self, at: SimTime, target: usize, what: What) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, target, what)));
    }

    pub fn call<R>(&mut self, i: usize, f: impl FnOnce(&mut Node, SimTime) -> (R, Vec<Output>)) -> R {
        let now = self.now;
        let (r, out) = f(&mut self.nodes[i], now);
        self.apply(i, out);
        r
    }

    /// Runs until `deadline` or until `stop` holds after an event.
    pub fn run(&mut self, deadline: SimTime, mut stop: impl FnMut(&Mesh) -> bool) -> bool {
        while let Some(Reverse((at, ..))) = self.queue.peek() {
            if *at > deadline {
                break;
            }
            let Reverse((at, _, target, what)) = self.queue.pop().unwrap();
            self.now = at;
            if self.down.contains(&target) {
                continue;
            }
            let out = match what {
                What::Deliver(b) => self.nodes[target].handle_receive(at, &b),
                What::Timer(k) => self.nodes[target].handle_timer(at, k),
            };
            self.apply(target, out);
            if stop(self) {
                return true;
            }
        }
        false
    }

    /// Top-level decisions of `label`, as (node, value, round).
    pub fn decisions(&self, label: &str) -> Vec<(NodeId, Vec<u8>, u32)> {
        self.events
            .iter()
            .filter_map(|(n, _, e)| match e {
                NodeEvent::Decided {
                    instance,
                    value,
                    round,
                    nested: false,
                } if instance.label == label => Some((*n, value.clone(), *round)),
                _ => None,
            })
            .collect()
    }
}
