use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::id::NodeId;

/// Network-graph discovery: which nodes are known, what each reported as
/// its neighbor list, and who has not answered yet.
#[derive(Debug, Clone, Default)]
pub struct DiscoveryState {
    pub known: BTreeSet<NodeId>,
    pub nnei: BTreeMap<NodeId, Vec<NodeId>>,
    pub pending: BTreeSet<NodeId>,
    pub started: bool,
    pub complete: bool,
    pub partial: bool,
    pub gets_sent: u64,
    pub sets_processed: u64,
}

impl DiscoveryState {
    /// Seeds discovery with the local node and its current neighbors.
    pub fn start(&mut self, me: NodeId, neighbors: &[NodeId]) {
        self.started = true;
        self.known.insert(me);
        self.nnei.insert(me, neighbors.to_vec());
        for n in neighbors {
            if self.known.insert(*n) {
                self.pending.insert(*n);
            }
        }
    }

    /// Applies a SET_NEIGHBORS answer from `from`. Returns the nodes learned
    /// for the first time, which must be queried in turn.
    pub fn on_set(&mut self, from: NodeId, list: &[NodeId]) -> Vec<NodeId> {
        self.sets_processed += 1;
        if !self.known.contains(&from) {
            self.known.insert(from);
        }
        self.pending.remove(&from);
        self.nnei.insert(from, list.to_vec());
        let mut fresh = Vec::new();
        for n in list {
            if self.known.insert(*n) {
                self.pending.insert(*n);
                fresh.push(*n);
            }
        }
        fresh
    }

    /// Drops a node that left (heartbeat timeout).
    pub fn forget(&mut self, n: NodeId) {
        self.known.remove(&n);
        self.pending.remove(&n);
        self.nnei.remove(&n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitive_learning() {
        let (a, b, c) = (NodeId(0), NodeId(1), NodeId(2));
        let mut d = DiscoveryState::default();
        d.start(a, &[b]);
        assert_eq!(d.pending.iter().copied().collect::<Vec<_>>(), [b]);
        let fresh = d.on_set(b, &[a, c]);
        assert_eq!(fresh, [c]);
        assert!(d.known.contains(&c));
        assert!(d.pending.contains(&c));
        d.on_set(c, &[b]);
        assert!(d.pending.is_empty());
        assert_eq!(d.known.len(), 3);
    }
}
