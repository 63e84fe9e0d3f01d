use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::id::{NodeId, SimTime};

/// Direct neighbors and the time their last heartbeat arrived.
#[derive(Debug, Clone, Default)]
pub struct NeighborTable {
    entries: BTreeMap<NodeId, SimTime>,
}

impl NeighborTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or refreshes `from`. Returns true if it was not present.
    pub fn on_heartbeat(&mut self, from: NodeId, now: SimTime) -> bool {
        self.entries.insert(from, now).is_none()
    }

    /// Removes every neighbor silent for more than `window` ms.
    pub fn expire(&mut self, now: SimTime, window: SimTime) -> Vec<NodeId> {
        let gone: Vec<NodeId> = self
            .entries
            .iter()
            .filter(|(_, t)| now.saturating_sub(**t) > window)
            .map(|(n, _)| *n)
            .collect();
        for n in &gone {
            self.entries.remove(n);
        }
        gone
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.entries.contains_key(&n)
    }

    pub fn last_heartbeat(&self, n: NodeId) -> Option<SimTime> {
        self.entries.get(&n).copied()
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_refresh_expire() {
        let mut t = NeighborTable::new();
        assert!(t.on_heartbeat(NodeId(1), 0));
        assert!(!t.on_heartbeat(NodeId(1), 100));
        assert_eq!(t.len(), 1);
        assert_eq!(t.last_heartbeat(NodeId(1)), Some(100));
        assert!(t.expire(600, 500).is_empty());
        assert_eq!(t.expire(601, 500), [NodeId(1)]);
        assert!(t.is_empty());
    }
}
