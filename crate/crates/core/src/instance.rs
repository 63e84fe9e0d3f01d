//! Protocol instance naming and the per-node instance registry.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolTag {
    Beb,
    Rrb,
    Binary,
    Multivalued,
    Vector,
}

impl ProtocolTag {
    pub const fn code(self) -> u8 {
        match self {
            ProtocolTag::Beb => 1,
            ProtocolTag::Rrb => 2,
            ProtocolTag::Binary => 3,
            ProtocolTag::Multivalued => 4,
            ProtocolTag::Vector => 5,
        }
    }

    pub const fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => ProtocolTag::Beb,
            2 => ProtocolTag::Rrb,
            3 => ProtocolTag::Binary,
            4 => ProtocolTag::Multivalued,
            5 => ProtocolTag::Vector,
            _ => return None,
        })
    }

    pub const fn name(self) -> &'static str {
        match self {
            ProtocolTag::Beb => "BEB",
            ProtocolTag::Rrb => "RRB",
            ProtocolTag::Binary => "BIN",
            ProtocolTag::Multivalued => "MV",
            ProtocolTag::Vector => "VEC",
        }
    }
}

/// Globally unique name of a protocol execution: an application label, the
/// protocol, and an optional sub-round used when one protocol nests another
/// (vector consensus round `r` runs multivalued instance `(vid, r)`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId {
    pub label: String,
    pub tag: ProtocolTag,
    pub sub_round: Option<u32>,
}

impl InstanceId {
    pub fn new(label: impl Into<String>, tag: ProtocolTag) -> Self {
        InstanceId {
            label: label.into(),
            tag,
            sub_round: None,
        }
    }

    pub fn with_sub_round(mut self, r: u32) -> Self {
        self.sub_round = Some(r);
        self
    }

    /// The instance a parent protocol spawns for `tag`. The child label
    /// embeds the parent tag so nested ids never collide with top-level ones.
    pub fn child(&self, tag: ProtocolTag, sub_round: Option<u32>) -> Self {
        let mut label = self.label.clone();
        label.push('/');
        label.push_str(self.tag.name());
        if let Some(r) = self.sub_round {
            label.push_str(&alloc::format!("{r}"));
        }
        InstanceId {
            label,
            tag,
            sub_round,
        }
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.label, self.tag.name())?;
        if let Some(r) = self.sub_round {
            write!(f, ":{r}")?;
        }
        Ok(())
    }
}

/// Isolated per-instance contexts keyed by [`InstanceId`].
#[derive(Debug, Clone)]
pub struct InstanceRegistry<T> {
    active: BTreeMap<InstanceId, T>,
}

impl<T> Default for InstanceRegistry<T> {
    fn default() -> Self {
        InstanceRegistry {
            active: BTreeMap::new(),
        }
    }
}

impl<T> InstanceRegistry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: InstanceId, ctx: T) -> Result<&mut T, Error> {
        use alloc::collections::btree_map::Entry;
        match self.active.entry(id) {
            Entry::Occupied(e) => Err(Error::DuplicateInstance(e.key().clone())),
            Entry::Vacant(v) => Ok(v.insert(ctx)),
        }
    }

    pub fn get(&self, id: &InstanceId) -> Option<&T> {
        self.active.get(id)
    }

    pub fn get_mut(&mut self, id: &InstanceId) -> Option<&mut T> {
        self.active.get_mut(id)
    }

    pub fn contains(&self, id: &InstanceId) -> bool {
        self.active.contains_key(id)
    }

    pub fn remove(&mut self, id: &InstanceId) -> Option<T> {
        self.active.remove(id)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &InstanceId> {
        self.active.keys()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&InstanceId, &mut T)> {
        self.active.iter_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn duplicate_registration_fails() {
        let mut reg = InstanceRegistry::new();
        let id = InstanceId::new("lbl", ProtocolTag::Binary);
        reg.register(id.clone(), 0u32).unwrap();
        assert_eq!(reg.register(id.clone(), 1), Err(Error::DuplicateInstance(id)));
    }

    #[test]
    fn distinct_sub_rounds_coexist() {
        let mut reg = InstanceRegistry::new();
        let base = InstanceId::new("lbl", ProtocolTag::Multivalued);
        reg.register(base.clone().with_sub_round(0), ()).unwrap();
        reg.register(base.with_sub_round(1), ()).unwrap();
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn hundred_instances_are_isolated() {
        let mut reg: InstanceRegistry<Vec<u32>> = InstanceRegistry::new();
        for i in 0..100u32 {
            let id = InstanceId::new(alloc::format!("app{i}"), ProtocolTag::Binary);
            reg.register(id, Vec::new()).unwrap().push(i);
        }
        for (id, store) in reg.iter_mut() {
            let i: u32 = id.label[3..].parse().unwrap();
            assert_eq!(store.as_slice(), &[i]);
        }
        assert_eq!(reg.ids().count(), 100);
    }

    #[test]
    fn child_ids_do_not_collide_with_top_level() {
        let mv = InstanceId::new("x", ProtocolTag::Multivalued);
        let child = mv.child(ProtocolTag::Binary, None);
        assert_ne!(child, InstanceId::new("x", ProtocolTag::Binary));
        let vid = InstanceId::new("x", ProtocolTag::Vector);
        assert_ne!(
            vid.child(ProtocolTag::Multivalued, Some(0)),
            vid.child(ProtocolTag::Multivalued, Some(1))
        );
    }
}
