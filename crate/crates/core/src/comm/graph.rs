use alloc::collections::{BTreeMap, BTreeSet};

use crate::id::NodeId;

/// Locally perceived "who knows whom" relation. An edge `a -> b` means `a`
/// has been observed to know `b`.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    edges: BTreeMap<NodeId, BTreeSet<NodeId>>,
    count: usize,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `a -> b`. Self edges are ignored. Returns true if new.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> bool {
        if a == b {
            return false;
        }
        let added = self.edges.entry(a).or_default().insert(b);
        if added {
            self.count += 1;
        }
        added
    }

    /// Adds the edges implied by a forwarding path ending at `receiver`.
    pub fn add_path(&mut self, visited: &[NodeId], receiver: NodeId) {
        for w in visited.windows(2) {
            self.add_edge(w[0], w[1]);
        }
        if let Some(last) = visited.last() {
            self.add_edge(*last, receiver);
        }
    }

    pub fn knows(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn known_by(&self, a: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges.get(&a).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn edge_count(&self) -> usize {
        self.count
    }

    /// Removes a node and every edge touching it. Used by membership only.
    pub fn remove_node(&mut self, n: NodeId) {
        if let Some(out) = self.edges.remove(&n) {
            self.count -= out.len();
        }
        for s in self.edges.values_mut() {
            if s.remove(&n) {
                self.count -= 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_edges_and_no_self_loops() {
        let mut g = KnowledgeGraph::new();
        g.add_path(&[NodeId(0), NodeId(1), NodeId(2)], NodeId(3));
        assert!(g.knows(NodeId(0), NodeId(1)));
        assert!(g.knows(NodeId(2), NodeId(3)));
        assert!(!g.knows(NodeId(1), NodeId(0)));
        assert!(!g.add_edge(NodeId(4), NodeId(4)));
        assert_eq!(g.edge_count(), 3);
        g.remove_node(NodeId(2));
        assert_eq!(g.edge_count(), 1);
    }
}
