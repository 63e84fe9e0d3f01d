//! Duplicate suppression for best effort broadcast.

use alloc::collections::{BTreeMap, BTreeSet};

use crate::id::NodeId;

pub const DEFAULT_WINDOW: u64 = 4096;

/// Sliding record of accepted sequence numbers for one sender.
#[derive(Debug, Clone, Default)]
pub struct SeqWindow {
    highest: u64,
    seen: BTreeSet<u64>,
}

impl SeqWindow {
    /// True when `seq` has not been accepted and is not older than the window.
    pub fn is_fresh(&self, seq: u64, window: u64) -> bool {
        if seq.saturating_add(window) <= self.highest {
            return false;
        }
        !self.seen.contains(&seq)
    }

    pub fn mark(&mut self, seq: u64, window: u64) {
        self.seen.insert(seq);
        if seq > self.highest {
            self.highest = seq;
            let floor = self.highest.saturating_sub(window);
            if self.seen.first().is_some_and(|s| *s < floor) {
                self.seen = self.seen.split_off(&floor);
            }
        }
    }

    pub fn highest(&self) -> u64 {
        self.highest
    }
}

#[derive(Debug, Clone)]
pub struct BebState {
    window: u64,
    senders: BTreeMap<NodeId, SeqWindow>,
}

impl Default for BebState {
    fn default() -> Self {
        BebState {
            window: DEFAULT_WINDOW,
            senders: BTreeMap::new(),
        }
    }
}

impl BebState {
    pub fn new(window: u64) -> Self {
        BebState {
            window,
            senders: BTreeMap::new(),
        }
    }

    pub fn is_fresh(&self, sender: NodeId, seq: u64) -> bool {
        self.senders
            .get(&sender)
            .is_none_or(|w| w.is_fresh(seq, self.window))
    }

    pub fn mark(&mut self, sender: NodeId, seq: u64) {
        let w = self.window;
        self.senders.entry(sender).or_default().mark(seq, w);
    }

    pub fn highest_seq(&self, sender: NodeId) -> Option<u64> {
        self.senders.get(&sender).map(|w| w.highest())
    }
}
