//! Addressed multi-hop hints. A flood body is signed by its origin and
//! relayed by every node that sees it while its ttl lasts. Used for
//! acknowledgements and for discovery requests to nodes out of radio range.
//!
//! `ttl` is the hop budget fixed by the origin. Relays never rewrite the
//! body; they append themselves to the envelope's visited list, and a copy
//! whose visited list already holds `ttl` nodes is not relayed further.

use alloc::vec::Vec;

use crate::auth::{KeyPair, Signature, Verifier};
use crate::id::NodeId;
use crate::wire::{Reader, WireError, Writer};

const DOMAIN: u8 = b'F';
pub const BROADCAST: NodeId = NodeId(u32::MAX);

#[derive(Debug, Clone)]
pub struct FloodView<'a> {
    pub origin: NodeId,
    pub origin_seq: u64,
    pub dest: NodeId,
    pub ttl: u8,
    pub payload: &'a [u8],
    pub signature: Signature,
    signed: &'a [u8],
}

impl<'a> FloodView<'a> {
    pub fn decode(body: &'a [u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(body);
        if r.u8()? != DOMAIN {
            return Err(WireError::Malformed("flood domain"));
        }
        let origin = r.node()?;
        let origin_seq = r.u64()?;
        let dest = r.node()?;
        let ttl = r.u8()?;
        let payload = r.bytes()?;
        let signed = &body[..r.position()];
        let signature = r.sig()?;
        r.finish()?;
        Ok(FloodView {
            origin,
            origin_seq,
            dest,
            ttl,
            payload,
            signature,
            signed,
        })
    }

    pub fn verify(&self, v: &dyn Verifier) -> bool {
        v.verify(self.origin, self.signed, &self.signature)
    }

    pub fn is_for(&self, me: NodeId) -> bool {
        self.dest == me || self.dest == BROADCAST
    }

    pub fn signed_bytes(&self) -> &'a [u8] {
        self.signed
    }
}

pub fn encode_flood(
    key: &KeyPair,
    origin_seq: u64,
    dest: NodeId,
    ttl: u8,
    payload: &[u8],
) -> Vec<u8> {
    let mut w = Writer::with_capacity(payload.len() + 64);
    w.u8(DOMAIN)
        .node(key.node())
        .u64(origin_seq)
        .node(dest)
        .u8(ttl)
        .bytes(payload);
    let sig = key.sign(w.as_slice());
    w.sig(&sig);
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::KeyDirectory;

    #[test]
    fn round_trip_and_tamper() {
        let (keys, dir) = KeyDirectory::simulated(2, 1);
        let body = encode_flood(&keys[1], 9, NodeId(0), 3, b"ack");
        let v = FloodView::decode(&body).unwrap();
        assert_eq!((v.origin, v.origin_seq, v.dest, v.ttl), (NodeId(1), 9, NodeId(0), 3));
        assert!(v.verify(&dir));
        assert!(v.is_for(NodeId(0)));
        assert!(!v.is_for(NodeId(1)));
        let mut bad = body.clone();
        let at = bad.windows(3).position(|w| w == b"ack").unwrap();
        bad[at] ^= 1;
        let v = FloodView::decode(&bad).unwrap();
        assert!(!v.verify(&dir));
    }
}
