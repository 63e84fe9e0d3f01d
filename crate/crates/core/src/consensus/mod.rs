//! Agreement services run by the members of a consensus group.
//!
//! - [`binary`]: randomized binary consensus in rounds of three phases,
//!   carried over best effort broadcast.
//! - [`multivalued`]: agreement on an arbitrary byte string (or ⊥), built on
//!   binary consensus and reliable broadcast.
//! - [`vector`]: agreement on a vector holding at least `2f + 1` signed
//!   proposals, built on repeated multivalued consensus.
//! - [`decision`]: signed dissemination of results to non-members and the
//!   query protocol used by recovering nodes.
//!
//! Each protocol is a plain state machine. Inputs are validated messages and
//! child results; outputs are [`Effect`]s the owner carries out.

pub mod binary;
pub mod decision;
pub mod multivalued;
pub mod vector;

use alloc::vec::Vec;

use crate::auth::{digest, KeyPair, Signature, Verifier};
use crate::error::Error;
use crate::id::NodeId;
use crate::instance::InstanceId;
use crate::quorum::FaultBudget;
use crate::wire::{Reader, WireError, Writer};

/// Default cap on proposal size for multivalued and vector consensus.
pub const MAX_PROPOSAL: usize = 64 * 1024;

/// The processes taking part in an instance and their fault budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    members: Vec<NodeId>,
    budget: FaultBudget,
}

impl Group {
    pub fn new(mut members: Vec<NodeId>, f: usize) -> Result<Self, Error> {
        members.sort_unstable();
        members.dedup();
        let budget = FaultBudget::new(members.len(), f)?;
        Ok(Group { members, budget })
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.members.binary_search(&n).is_ok()
    }

    pub fn index_of(&self, n: NodeId) -> Option<usize> {
        self.members.binary_search(&n).ok()
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn f(&self) -> usize {
        self.budget.f()
    }

    pub fn quorum(&self) -> usize {
        self.budget.quorum()
    }

    pub fn budget(&self) -> FaultBudget {
        self.budget
    }
}

/// Work a protocol instance asks its owner to perform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    /// One-hop broadcast of a consensus payload to the group.
    Beb(Vec<u8>),
    /// Repeat an earlier one-hop broadcast unchanged.
    Rebroadcast,
    /// Reliable broadcast restricted to the group.
    Rrb(Vec<u8>),
    StartBinary { id: InstanceId, proposal: bool },
    StartMultivalued { id: InstanceId, proposal: Vec<u8> },
    /// The instance reached its decision.
    Decided,
}

/// Signed statement in a justification set: `sender` voted `value` in
/// `phase`. The value is protocol specific (a bit, ⊥, or a digest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote<V> {
    pub sender: NodeId,
    pub phase: u32,
    pub value: V,
    pub sig: Signature,
}

pub(crate) fn sign_bytes(
    domain: u8,
    id: &InstanceId,
    sender: NodeId,
    phase: u32,
    value: &[u8],
) -> Vec<u8> {
    let mut w = Writer::with_capacity(48 + id.label.len() + value.len());
    w.u8(domain)
        .instance(id)
        .node(sender)
        .u32(phase)
        .raw(value);
    w.finish()
}

pub(crate) fn sign_vote(
    key: &KeyPair,
    domain: u8,
    id: &InstanceId,
    phase: u32,
    value: &[u8],
) -> Signature {
    key.sign(&sign_bytes(domain, id, key.node(), phase, value))
}

pub(crate) fn check_vote(
    v: &dyn Verifier,
    domain: u8,
    id: &InstanceId,
    sender: NodeId,
    phase: u32,
    value: &[u8],
    sig: &Signature,
) -> bool {
    v.verify(sender, &sign_bytes(domain, id, sender, phase, value), sig)
}

/// Optional byte string where `None` is ⊥. Encoded as a flag byte followed
/// by the length-prefixed bytes when present.
pub fn encode_opt(w: &mut Writer, v: &Option<Vec<u8>>) {
    match v {
        None => {
            w.u8(0);
        }
        Some(b) => {
            w.u8(1).bytes(b);
        }
    }
}

pub fn decode_opt(r: &mut Reader<'_>) -> Result<Option<Vec<u8>>, WireError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(r.bytes()?.to_vec())),
        _ => Err(WireError::Malformed("option flag")),
    }
}

/// Digest identifying a value (or ⊥) inside votes.
pub fn value_digest(v: &Option<Vec<u8>>) -> Option<[u8; 32]> {
    v.as_ref().map(|b| digest(b))
}

/// Bytes that represent a decision in events, caches and DECISION messages.
pub fn encode_bit(b: bool) -> Vec<u8> {
    alloc::vec![b as u8]
}

/// Encodes a multivalued outcome (⊥ or bytes) as a decision value.
pub fn encode_mv_outcome(v: &Option<Vec<u8>>) -> Vec<u8> {
    let mut w = Writer::new();
    encode_opt(&mut w, v);
    w.finish()
}

pub fn decode_mv_outcome(bytes: &[u8]) -> Result<Option<Vec<u8>>, WireError> {
    let mut r = Reader::new(bytes);
    let v = decode_opt(&mut r)?;
    r.finish()?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_rejects_bad_budget() {
        assert!(Group::new((0..4).map(NodeId).collect(), 1).is_ok());
        assert_eq!(
            Group::new((0..4).map(NodeId).collect(), 2),
            Err(Error::InvalidBudget { n: 4, f: 2 })
        );
        let g = Group::new(alloc::vec![NodeId(5), NodeId(1), NodeId(3), NodeId(9)], 1).unwrap();
        assert_eq!(g.index_of(NodeId(5)), Some(2));
        assert_eq!(g.quorum(), 3);
    }

    #[test]
    fn outcome_round_trip() {
        for v in [None, Some(alloc::vec![]), Some(b"abc".to_vec())] {
            assert_eq!(decode_mv_outcome(&encode_mv_outcome(&v)).unwrap(), v);
        }
    }
}
