//! Selection of the sink: a group of at least `3f + 1` nodes that all know
//! each other and are all in direct radio range of each other.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::id::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkView {
    pub epoch: u32,
    pub members: Vec<NodeId>,
}

impl SinkView {
    pub fn contains(&self, n: NodeId) -> bool {
        self.members.binary_search(&n).is_ok()
    }
}

/// What a node announced in its KNOWN_SET broadcast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnownSet {
    pub epoch: u32,
    pub known: Vec<NodeId>,
    pub neighbors: Vec<NodeId>,
}

/// Edge `a - b` iff each lists the other as a neighbor. An edge therefore
/// needs both endpoints to assert it; a liar can only add edges to itself.
pub fn mutual(lists: &BTreeMap<NodeId, Vec<NodeId>>, a: NodeId, b: NodeId) -> bool {
    a != b
        && lists.get(&a).is_some_and(|l| l.contains(&b))
        && lists.get(&b).is_some_and(|l| l.contains(&a))
}

/// Deterministic greedy clique search. Seeds are tried in ascending order;
/// each seed grows by the smallest candidate adjacent to every member until
/// nothing fits or `cap` is reached. The first clique with at least `min`
/// members is returned.
pub fn greedy_clique(
    candidates: &BTreeSet<NodeId>,
    adjacent: impl Fn(NodeId, NodeId) -> bool,
    min: usize,
    cap: Option<usize>,
) -> Option<Vec<NodeId>> {
    let cap = cap.unwrap_or(usize::MAX);
    for seed in candidates {
        let mut clique = alloc::vec![*seed];
        while clique.len() < cap {
            let next = candidates
                .iter()
                .find(|c| !clique.contains(c) && clique.iter().all(|m| adjacent(*m, **c)));
            match next {
                Some(c) => clique.push(*c),
                None => break,
            }
        }
        if clique.len() >= min {
            clique.sort_unstable();
            return Some(clique);
        }
    }
    None
}

/// Computes the sink from collected KNOWN_SET announcements (the local
/// node's own announcement included). A peer is a candidate when its known
/// set shares at least `3f + 1` nodes with `my_known`.
pub fn compute_sink(
    me: NodeId,
    my_known: &BTreeSet<NodeId>,
    announced: &BTreeMap<NodeId, KnownSet>,
    f: usize,
    cap: Option<usize>,
) -> Option<Vec<NodeId>> {
    let min = 3 * f + 1;
    let mut candidates = BTreeSet::new();
    candidates.insert(me);
    for (j, ks) in announced {
        if !my_known.contains(j) {
            continue;
        }
        let common = ks.known.iter().filter(|x| my_known.contains(x)).count();
        if common >= min {
            candidates.insert(*j);
        }
    }
    let lists: BTreeMap<NodeId, Vec<NodeId>> = announced
        .iter()
        .map(|(j, ks)| (*j, ks.neighbors.clone()))
        .collect();
    greedy_clique(&candidates, |a, b| mutual(&lists, a, b), min, cap)
}
