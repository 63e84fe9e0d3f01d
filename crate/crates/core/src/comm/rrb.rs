//! Reachable reliable broadcast bookkeeping.
//!
//! Body layout (the envelope payload of an RRB copy):
//!
//! ```text
//! 'R' | origin:u32 | origin_seq:u64 | scope:(u16 n, n x u32) | payload:(u32, bytes) | sig
//! ```
//!
//! `sig` is the origin's signature over everything before it and never
//! changes while the copy is forwarded. An empty scope means every node
//! that receives the message should deliver it; otherwise only the listed
//! nodes take part (consensus traffic stays inside the sink).

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::auth::{KeyPair, Signature, Verifier};
use crate::comm::disjoint::PathSet;
use crate::id::{NodeId, SimTime};
use crate::wire::{Reader, WireError, Writer};

const DOMAIN: u8 = b'R';

#[derive(Debug, Clone)]
pub struct RrbView<'a> {
    pub origin: NodeId,
    pub origin_seq: u64,
    pub scope: Vec<NodeId>,
    pub payload: &'a [u8],
    pub signature: Signature,
    signed: &'a [u8],
}

impl<'a> RrbView<'a> {
    pub fn decode(body: &'a [u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(body);
        if r.u8()? != DOMAIN {
            return Err(WireError::Malformed("rrb domain"));
        }
        let origin = r.node()?;
        let origin_seq = r.u64()?;
        let scope = r.nodes()?;
        let payload = r.bytes()?;
        let signed = &body[..r.position()];
        let signature = r.sig()?;
        r.finish()?;
        Ok(RrbView {
            origin,
            origin_seq,
            scope,
            payload,
            signature,
            signed,
        })
    }

    pub fn verify(&self, v: &dyn Verifier) -> bool {
        v.verify(self.origin, self.signed, &self.signature)
    }

    pub fn in_scope(&self, n: NodeId) -> bool {
        self.scope.is_empty() || self.scope.contains(&n)
    }
}

pub fn encode_rrb(key: &KeyPair, origin_seq: u64, scope: &[NodeId], payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::with_capacity(payload.len() + 64 + 4 * scope.len());
    w.u8(DOMAIN)
        .node(key.node())
        .u64(origin_seq)
        .nodes(scope)
        .bytes(payload);
    let sig = key.sign(w.as_slice());
    w.sig(&sig);
    w.finish()
}

/// Checks the visited list of a received copy: it starts at the origin,
/// never repeats a node and ends at the node that transmitted the copy.
pub fn visited_well_formed(visited: &[NodeId], origin: NodeId, sender: NodeId) -> bool {
    if visited.first() != Some(&origin) || visited.last() != Some(&sender) {
        return false;
    }
    let mut seen = BTreeSet::new();
    visited.iter().all(|n| seen.insert(*n))
}

/// One payload variant received for an `(origin, origin_seq)` key. Honest
/// origins produce a single variant; a Byzantine origin can sign several.
#[derive(Debug, Clone)]
pub struct Variant {
    pub body: Vec<u8>,
    pub paths: PathSet,
    /// Intermediate-node sets of the copies this node forwarded (sorted).
    pub forwarded: Vec<Vec<NodeId>>,
    pub forwarded_direct: bool,
    pub last_forward: SimTime,
}

impl Variant {
    pub fn new(body: Vec<u8>) -> Self {
        Variant {
            body,
            paths: PathSet::new(),
            forwarded: Vec::new(),
            forwarded_direct: false,
            last_forward: 0,
        }
    }

    /// Forward policy. A copy is forwarded unless its path contains the
    /// path of a copy already forwarded, at most `max_forwards` times. The
    /// direct copy contains nothing, so once it has gone out nothing more
    /// is forwarded. Forwarding every inclusion-minimal path is what lets
    /// downstream nodes find disjoint paths whenever the graph has them; a
    /// disjoint-only rule can commit to a path that blocks a later one.
    pub fn should_forward(&self, intermediates: &[NodeId], max_forwards: usize) -> bool {
        if self.forwarded_direct {
            return false;
        }
        if intermediates.is_empty() {
            return true;
        }
        if self.forwarded.len() >= max_forwards {
            return false;
        }
        let mut p = intermediates.to_vec();
        p.sort_unstable();
        !self
            .forwarded
            .iter()
            .any(|q| q.iter().all(|x| p.binary_search(x).is_ok()))
    }

    pub fn record_forward(&mut self, intermediates: &[NodeId], now: SimTime) {
        if intermediates.is_empty() {
            self.forwarded_direct = true;
        }
        let mut p = intermediates.to_vec();
        p.sort_unstable();
        self.forwarded.push(p);
        self.last_forward = now;
    }
}

#[derive(Debug, Clone, Default)]
pub struct RrbEntry {
    pub variants: Vec<Variant>,
    pub delivered: bool,
    pub got_direct: bool,
}

impl RrbEntry {
    pub fn variant_index(&self, body: &[u8]) -> Option<usize> {
        self.variants.iter().position(|v| v.body == body)
    }
}

/// A message this node originated and keeps retransmitting until every
/// target acknowledged it.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub envelope: Vec<u8>,
    pub pending: BTreeSet<NodeId>,
    pub next_at: SimTime,
    pub interval: SimTime,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::KeyDirectory;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn body_round_trip() {
        let (keys, dir) = KeyDirectory::simulated(3, 0);
        let body = encode_rrb(&keys[2], 4, &[n(0), n(2)], b"payload");
        let v = RrbView::decode(&body).unwrap();
        assert_eq!(v.origin, n(2));
        assert_eq!(v.origin_seq, 4);
        assert!(v.in_scope(n(0)));
        assert!(!v.in_scope(n(1)));
        assert!(v.verify(&dir));
    }

    #[test]
    fn visited_rules() {
        assert!(visited_well_formed(&[n(0)], n(0), n(0)));
        assert!(visited_well_formed(&[n(0), n(1)], n(0), n(1)));
        assert!(!visited_well_formed(&[n(0), n(1)], n(0), n(2)));
        assert!(!visited_well_formed(&[n(1), n(0)], n(0), n(0)));
        assert!(!visited_well_formed(&[n(0), n(1), n(0)], n(0), n(0)));
        assert!(!visited_well_formed(&[], n(0), n(0)));
    }

    #[test]
    fn forward_policy() {
        let mut v = Variant::new(Vec::new());
        assert!(v.should_forward(&[n(1)], 2));
        v.record_forward(&[n(1)], 0);
        assert!(!v.should_forward(&[n(1), n(2)], 2));
        assert!(v.should_forward(&[n(3)], 2));
        v.record_forward(&[n(3)], 0);
        assert!(!v.should_forward(&[n(4)], 2));
        assert!(v.should_forward(&[], 2));
        v.record_forward(&[], 0);
        assert!(!v.should_forward(&[], 2));
    }
}
