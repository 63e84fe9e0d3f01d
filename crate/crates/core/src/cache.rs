//! Write-once store of decided values, used to answer recovering processes.

use alloc::collections::BTreeMap;

use crate::id::SimTime;
use crate::instance::InstanceId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedResult<V> {
    pub value: V,
    pub decided_at: SimTime,
}

#[derive(Debug, Clone)]
pub struct ResultCache<V> {
    entries: BTreeMap<InstanceId, CachedResult<V>>,
    /// Entries older than this are dropped by [`ResultCache::collect_garbage`].
    horizon: Option<SimTime>,
}

impl<V> Default for ResultCache<V> {
    fn default() -> Self {
        ResultCache {
            entries: BTreeMap::new(),
            horizon: None,
        }
    }
}

impl<V: Clone + PartialEq> ResultCache<V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_horizon(horizon: SimTime) -> Self {
        ResultCache {
            entries: BTreeMap::new(),
            horizon: Some(horizon),
        }
    }

    /// Records a decision. Returns `false` if the instance was already
    /// recorded; the stored value is never replaced.
    pub fn insert(&mut self, id: InstanceId, value: V, now: SimTime) -> bool {
        use alloc::collections::btree_map::Entry;
        match self.entries.entry(id) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(CachedResult {
                    value,
                    decided_at: now,
                });
                true
            }
        }
    }

    pub fn get(&self, id: &InstanceId) -> Option<&CachedResult<V>> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn collect_garbage(&mut self, now: SimTime) -> usize {
        let Some(h) = self.horizon else { return 0 };
        let before = self.entries.len();
        self.entries
            .retain(|_, e| now.saturating_sub(e.decided_at) <= h);
        before - self.entries.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ProtocolTag;

    #[test]
    fn entries_are_write_once() {
        let mut c = ResultCache::new();
        let id = InstanceId::new("a", ProtocolTag::Binary);
        assert!(c.insert(id.clone(), 1u8, 10));
        assert!(!c.insert(id.clone(), 0u8, 11));
        assert_eq!(c.get(&id).unwrap().value, 1);
        assert_eq!(c.get(&id).unwrap().decided_at, 10);
    }

    #[test]
    fn default_cache_never_collects() {
        let mut c = ResultCache::new();
        c.insert(InstanceId::new("a", ProtocolTag::Binary), 1u8, 0);
        assert_eq!(c.collect_garbage(u64::MAX), 0);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn horizon_evicts_old_entries() {
        let mut c = ResultCache::with_horizon(100);
        c.insert(InstanceId::new("old", ProtocolTag::Binary), 1u8, 0);
        c.insert(InstanceId::new("new", ProtocolTag::Binary), 0u8, 150);
        assert_eq!(c.collect_garbage(200), 1);
        assert!(c.get(&InstanceId::new("new", ProtocolTag::Binary)).is_some());
    }
}
