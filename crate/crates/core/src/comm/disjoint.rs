//! Counting node-disjoint relay paths.
//!
//! A path is described by the set of intermediate nodes a copy traversed,
//! origin and receiver excluded. The direct link is the empty set, which is
//! disjoint from every other path.

use alloc::vec::Vec;

use crate::id::NodeId;

/// Above this many stored paths the count falls back to a greedy packing.
pub const EXACT_LIMIT: usize = 12;

fn is_subset(a: &[NodeId], b: &[NodeId]) -> bool {
    // both sorted
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j] < *x {
            j += 1;
        }
        if j == b.len() || b[j] != *x {
            return false;
        }
        j += 1;
    }
    true
}

fn is_disjoint(a: &[NodeId], b: &[NodeId]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => return false,
        }
    }
    true
}

fn normalize(path: &[NodeId]) -> Vec<NodeId> {
    let mut p = path.to_vec();
    p.sort_unstable();
    p.dedup();
    p
}

/// Family of relay paths reduced to its inclusion-minimal members. Two
/// non-empty paths where one contains the other can never both be part of a
/// disjoint family, and the smaller one is always at least as good, so the
/// larger one is not kept. The direct link is tracked separately because it
/// is disjoint from everything.
#[derive(Debug, Clone, Default)]
pub struct PathSet {
    direct: bool,
    paths: Vec<Vec<NodeId>>,
}

impl PathSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a path. Returns `false` when an already stored path is a subset
    /// of it (the new copy adds nothing).
    pub fn insert(&mut self, path: &[NodeId]) -> bool {
        if path.is_empty() {
            let added = !self.direct;
            self.direct = true;
            return added;
        }
        let p = normalize(path);
        if self.paths.iter().any(|q| is_subset(q, &p)) {
            return false;
        }
        self.paths.retain(|q| !is_subset(&p, q));
        self.paths.push(p);
        true
    }

    /// True if storing `path` would not change the disjoint count.
    pub fn dominates(&self, path: &[NodeId]) -> bool {
        if path.is_empty() {
            return self.direct;
        }
        let p = normalize(path);
        self.paths.iter().any(|q| is_subset(q, &p))
    }

    pub fn len(&self) -> usize {
        self.paths.len() + self.direct as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_direct(&self) -> bool {
        self.direct
    }

    /// Stored relay paths (the direct link excluded).
    pub fn paths(&self) -> &[Vec<NodeId>] {
        &self.paths
    }

    /// Maximum number of pairwise disjoint stored paths, capped at `limit`.
    pub fn disjoint_count(&self, limit: usize) -> usize {
        let d = self.direct as usize;
        if limit <= d {
            return limit;
        }
        d + count_minimal(&self.paths, limit - d)
    }
}

fn count_minimal(paths: &[Vec<NodeId>], limit: usize) -> usize {
    if paths.len() <= EXACT_LIMIT {
        let mut order: Vec<&[NodeId]> = paths.iter().map(|p| p.as_slice()).collect();
        order.sort_by_key(|p| p.len());
        let mut chosen = Vec::with_capacity(order.len());
        let mut best = 0;
        search(&order, 0, &mut chosen, &mut best, limit);
        best
    } else {
        greedy(paths).min(limit)
    }
}

fn search<'a>(
    paths: &[&'a [NodeId]],
    at: usize,
    chosen: &mut Vec<&'a [NodeId]>,
    best: &mut usize,
    limit: usize,
) {
    if chosen.len() > *best {
        *best = chosen.len();
    }
    if *best >= limit || at == paths.len() || chosen.len() + (paths.len() - at) <= *best {
        return;
    }
    let p = paths[at];
    if chosen.iter().all(|c| is_disjoint(c, p)) {
        chosen.push(p);
        search(paths, at + 1, chosen, best, limit);
        chosen.pop();
        if *best >= limit {
            return;
        }
    }
    search(paths, at + 1, chosen, best, limit);
}

fn greedy(paths: &[Vec<NodeId>]) -> usize {
    let mut order: Vec<&Vec<NodeId>> = paths.iter().collect();
    order.sort();
    order.sort_by_key(|p| p.len());
    let mut chosen: Vec<&Vec<NodeId>> = Vec::new();
    for p in order {
        if chosen.iter().all(|c| is_disjoint(c, p)) {
            chosen.push(p);
        }
    }
    chosen.len()
}

/// Maximum number of pairwise node-disjoint paths among `paths`, each given
/// as its intermediate nodes. Exact when at most [`EXACT_LIMIT`] paths remain
/// after dropping non-minimal ones, greedy otherwise (never overcounts).
pub fn disjoint_path_count(paths: &[Vec<NodeId>]) -> usize {
    let mut set = PathSet::new();
    for p in paths {
        set.insert(p);
    }
    set.disjoint_count(usize::MAX)
}
