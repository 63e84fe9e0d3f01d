//! Byte-level encoding shared by every message in the stack.
//!
//! Integers are big-endian. Variable fields carry a length prefix: `u32` for
//! byte strings, `u16` for node lists and labels, `u8` for signatures.
//!
//! Envelope layout (every transmission on the medium is one envelope):
//!
//! ```text
//! version:u8 | tag:u8 | sender:u32 | seq:u64 | visited:(u16 n, n x u32)
//!            | payload:(u32 len, bytes) | signature:(u8 len, bytes)
//! ```
//!
//! The signature is made by `sender` over every byte that precedes it.
//! `visited` is empty for one-hop messages and carries the forwarding path
//! for reliable broadcast copies.

use alloc::string::String;
use alloc::vec::Vec;

use crate::auth::{KeyPair, Signature, Verifier};
use crate::id::NodeId;
use crate::instance::{InstanceId, ProtocolTag};

pub const WIRE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error("unknown tag {0:#04x}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("field too long")]
    TooLong,
    #[error("malformed: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn with_capacity(cap: usize) -> Self {
        Writer {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn node(&mut self, v: NodeId) -> &mut Self {
        self.u32(v.0)
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn nodes(&mut self, v: &[NodeId]) -> &mut Self {
        self.u16(v.len() as u16);
        for n in v {
            self.node(*n);
        }
        self
    }

    pub fn sig(&mut self, s: &Signature) -> &mut Self {
        let b = s.as_bytes();
        self.u8(b.len() as u8);
        self.buf.extend_from_slice(b);
        self
    }

    pub fn instance(&mut self, id: &InstanceId) -> &mut Self {
        self.u16(id.label.len() as u16);
        self.buf.extend_from_slice(id.label.as_bytes());
        self.u8(id.tag.code());
        match id.sub_round {
            Some(r) => self.u8(1).u32(r),
            None => self.u8(0),
        }
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).ok_or(WireError::TooLong)?;
        if end > self.buf.len() {
            return Err(WireError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_be_bytes(a))
    }

    pub fn node(&mut self) -> Result<NodeId, WireError> {
        self.u32().map(NodeId)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn nodes(&mut self) -> Result<Vec<NodeId>, WireError> {
        let n = self.u16()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.node()?);
        }
        Ok(out)
    }

    pub fn sig(&mut self) -> Result<Signature, WireError> {
        let n = self.u8()? as usize;
        Signature::from_slice(self.take(n)?).ok_or(WireError::TooLong)
    }

    pub fn instance(&mut self) -> Result<InstanceId, WireError> {
        let n = self.u16()? as usize;
        let label = core::str::from_utf8(self.take(n)?)
            .map_err(|_| WireError::Malformed("label is not utf-8"))?;
        let code = self.u8()?;
        let tag = ProtocolTag::from_code(code).ok_or(WireError::UnknownTag(code))?;
        let sub_round = match self.u8()? {
            0 => None,
            1 => Some(self.u32()?),
            _ => return Err(WireError::Malformed("sub-round flag")),
        };
        Ok(InstanceId {
            label: String::from(label),
            tag,
            sub_round,
        })
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

/// Communication service that produced an envelope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WireTag {
    /// One-hop best effort broadcast.
    Beb,
    /// Reachable reliable broadcast copy (payload is an RRB body).
    Rrb,
    /// Addressed or flooded hint (payload is a flood body); used for
    /// acknowledgements and multi-hop discovery requests.
    Flood,
}

impl WireTag {
    pub const fn code(self) -> u8 {
        match self {
            WireTag::Beb => 1,
            WireTag::Rrb => 2,
            WireTag::Flood => 3,
        }
    }

    pub const fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(WireTag::Beb),
            2 => Some(WireTag::Rrb),
            3 => Some(WireTag::Flood),
            _ => None,
        }
    }
}

/// Upper-layer message type, the first byte of every delivered payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MsgType {
    Heartbeat = 0x01,
    GetNeighbors = 0x02,
    SetNeighbors = 0x03,
    KnownSet = 0x04,
    BinPhase = 0x10,
    MvMsg = 0x11,
    VecRow = 0x12,
    Decision = 0x13,
    ResultQuery = 0x14,
    ResultReply = 0x15,
    Ack = 0x20,
}

impl MsgType {
    pub fn from_code(c: u8) -> Option<Self> {
        use MsgType::*;
        Some(match c {
            0x01 => Heartbeat,
            0x02 => GetNeighbors,
            0x03 => SetNeighbors,
            0x04 => KnownSet,
            0x10 => BinPhase,
            0x11 => MvMsg,
            0x12 => VecRow,
            0x13 => Decision,
            0x14 => ResultQuery,
            0x15 => ResultReply,
            0x20 => Ack,
            _ => return None,
        })
    }

    pub fn of(payload: &[u8]) -> Option<Self> {
        payload.first().and_then(|c| Self::from_code(*c))
    }

    pub fn name(self) -> &'static str {
        use MsgType::*;
        match self {
            Heartbeat => "HEARTBEAT",
            GetNeighbors => "GET_NEIGHBORS",
            SetNeighbors => "SET_NEIGHBORS",
            KnownSet => "KNOWN_SET",
            BinPhase => "BIN_PHASE",
            MvMsg => "MV_MSG",
            VecRow => "VEC_ROW",
            Decision => "DECISION",
            ResultQuery => "RESULT_QUERY",
            ResultReply => "RESULT_REPLY",
            Ack => "ACK",
        }
    }
}

/// Borrowed view of a decoded envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeView<'a> {
    pub tag: WireTag,
    pub sender: NodeId,
    pub seq: u64,
    pub visited: Vec<NodeId>,
    pub payload: &'a [u8],
    pub signature: Signature,
    signed: &'a [u8],
}

impl<'a> EnvelopeView<'a> {
    pub fn decode(bytes: &'a [u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        if version != WIRE_VERSION {
            return Err(WireError::Version(version));
        }
        let code = r.u8()?;
        let tag = WireTag::from_code(code).ok_or(WireError::UnknownTag(code))?;
        let sender = r.node()?;
        let seq = r.u64()?;
        let visited = r.nodes()?;
        let payload = r.bytes()?;
        let signed = &bytes[..r.position()];
        let signature = r.sig()?;
        r.finish()?;
        Ok(EnvelopeView {
            tag,
            sender,
            seq,
            visited,
            payload,
            signature,
            signed,
        })
    }

    /// Bytes covered by the signature.
    pub fn signed_bytes(&self) -> &'a [u8] {
        self.signed
    }

    pub fn verify(&self, verifier: &dyn Verifier) -> bool {
        verifier.verify(self.sender, self.signed, &self.signature)
    }
}

/// Encodes and signs an envelope with `key`.
pub fn seal_envelope(
    key: &KeyPair,
    tag: WireTag,
    seq: u64,
    visited: &[NodeId],
    payload: &[u8],
) -> Vec<u8> {
    seal_envelope_as(key, key.node(), tag, seq, visited, payload)
}

/// Like [`seal_envelope`] but writes an arbitrary `sender` field. Only an
/// adversary has a reason to do this; receivers reject the result because
/// the signature does not match the claimed sender.
pub fn seal_envelope_as(
    key: &KeyPair,
    sender: NodeId,
    tag: WireTag,
    seq: u64,
    visited: &[NodeId],
    payload: &[u8],
) -> Vec<u8> {
    let mut w = Writer::with_capacity(payload.len() + 32 + 4 * visited.len() + 70);
    w.u8(WIRE_VERSION)
        .u8(tag.code())
        .node(sender)
        .u64(seq)
        .nodes(visited)
        .bytes(payload);
    let sig = key.sign(w.as_slice());
    w.sig(&sig);
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::KeyDirectory;
    use proptest::prelude::*;

    #[test]
    fn envelope_layout_is_fixed() {
        let (keys, _) = KeyDirectory::simulated(1, 0);
        let bytes = seal_envelope(&keys[0], WireTag::Rrb, 5, &[NodeId(0), NodeId(2)], b"hi");
        assert_eq!(bytes[0], WIRE_VERSION);
        assert_eq!(bytes[1], 2);
        assert_eq!(&bytes[2..6], &[0, 0, 0, 0]);
        assert_eq!(&bytes[6..14], &5u64.to_be_bytes());
        assert_eq!(&bytes[14..16], &[0, 2]);
        assert_eq!(&bytes[16..24], &[0, 0, 0, 0, 0, 0, 0, 2]);
        assert_eq!(&bytes[24..28], &[0, 0, 0, 2]);
        assert_eq!(&bytes[28..30], b"hi");
        assert_eq!(bytes[30], 32);
        assert_eq!(bytes.len(), 31 + 32);
    }

    #[test]
    fn truncated_and_trailing_input_is_rejected() {
        let (keys, _) = KeyDirectory::simulated(1, 0);
        let bytes = seal_envelope(&keys[0], WireTag::Beb, 1, &[], b"x");
        assert_eq!(
            EnvelopeView::decode(&bytes[..bytes.len() - 1]).unwrap_err(),
            WireError::Truncated
        );
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(EnvelopeView::decode(&long).unwrap_err(), WireError::Trailing(1));
        let mut bad = bytes;
        bad[0] = 9;
        assert_eq!(EnvelopeView::decode(&bad).unwrap_err(), WireError::Version(9));
    }

    #[test]
    fn forged_sender_fails_verification() {
        let (keys, dir) = KeyDirectory::simulated(2, 0);
        let bytes = seal_envelope_as(&keys[0], NodeId(1), WireTag::Beb, 1, &[], b"x");
        let env = EnvelopeView::decode(&bytes).unwrap();
        assert_eq!(env.sender, NodeId(1));
        assert!(!env.verify(&dir));
    }

    proptest! {
        #[test]
        fn envelope_round_trip(
            sender in 0u32..8,
            seq in any::<u64>(),
            visited in proptest::collection::vec(0u32..64, 0..8),
            payload in proptest::collection::vec(any::<u8>(), 0..256),
        ) {
            let (keys, dir) = KeyDirectory::simulated(8, 3);
            let visited: Vec<NodeId> = visited.into_iter().map(NodeId).collect();
            let bytes = seal_envelope(&keys[sender as usize], WireTag::Flood, seq, &visited, &payload);
            let env = EnvelopeView::decode(&bytes).unwrap();
            prop_assert_eq!(env.sender, NodeId(sender));
            prop_assert_eq!(env.seq, seq);
            prop_assert_eq!(&env.visited, &visited);
            prop_assert_eq!(env.payload, &payload[..]);
            prop_assert!(env.verify(&dir));
        }

        #[test]
        fn instance_ids_round_trip(label in "[a-z0-9/]{0,12}", sub in proptest::option::of(any::<u32>()), tag in 1u8..=5) {
            let id = InstanceId { label, tag: ProtocolTag::from_code(tag).unwrap(), sub_round: sub };
            let mut w = Writer::new();
            w.instance(&id);
            let bytes = w.finish();
            let mut r = Reader::new(&bytes);
            prop_assert_eq!(r.instance().unwrap(), id);
            prop_assert!(r.finish().is_ok());
        }
    }
}
