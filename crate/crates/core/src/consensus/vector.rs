//! Vector consensus: agreement on a vector holding exactly `2f + 1` signed
//! proposals.
//!
//! Each member signs its proposal and broadcasts the row it is building.
//! Rows received with exactly `2f + 1` valid entries are stored; the local
//! row takes the sender's own entry while it has fewer than `2f + 1`. Once
//! any stored row is complete, rounds of multivalued consensus run over a
//! chosen row (rotating with the round number) until one decides a row.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::auth::{KeyPair, Signature, Verifier};
use crate::consensus::{sign_bytes, Effect, Group, MAX_PROPOSAL};
use crate::error::Error;
use crate::id::NodeId;
use crate::instance::{InstanceId, ProtocolTag};
use crate::wire::{MsgType, Reader, WireError, Writer};

pub const DOMAIN: u8 = b'E';

pub type Entry = (Vec<u8>, Signature);
/// One slot per group member, in member order.
pub type Row = Vec<Option<Entry>>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VecReject {
    #[error("sender is not a member")]
    NotMember,
    #[error("column {0} is not a member")]
    BadColumn(NodeId),
    #[error("column {0} appears twice")]
    DuplicateColumn(NodeId),
    #[error("entry of column {0} has an invalid signature")]
    BadSignature(NodeId),
    #[error("row has {0} entries")]
    BadCount(usize),
    #[error("entry value too large")]
    TooLarge,
    #[error("wire: {0}")]
    Wire(#[from] WireError),
}

pub fn sign_entry(key: &KeyPair, vid: &InstanceId, value: &[u8]) -> Signature {
    key.sign(&sign_bytes(DOMAIN, vid, key.node(), 0, value))
}

pub fn check_entry(
    verifier: &dyn Verifier,
    vid: &InstanceId,
    column: NodeId,
    value: &[u8],
    sig: &Signature,
) -> bool {
    verifier.verify(column, &sign_bytes(DOMAIN, vid, column, 0, value), sig)
}

pub fn filled(row: &Row) -> usize {
    row.iter().filter(|e| e.is_some()).count()
}

/// Canonical encoding of a row, used as the multivalued proposal and as the
/// decided value: member count, then per column a presence flag followed by
/// the value and its signature.
pub fn encode_row(row: &Row) -> Vec<u8> {
    let mut w = Writer::new();
    w.u16(row.len() as u16);
    for e in row {
        match e {
            None => {
                w.u8(0);
            }
            Some((v, s)) => {
                w.u8(1).bytes(v).sig(s);
            }
        }
    }
    w.finish()
}

pub fn decode_row(bytes: &[u8]) -> Result<Row, WireError> {
    let mut r = Reader::new(bytes);
    let n = r.u16()? as usize;
    let mut row = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        row.push(match r.u8()? {
            0 => None,
            1 => Some((r.bytes()?.to_vec(), r.sig()?)),
            _ => return Err(WireError::Malformed("entry flag")),
        });
    }
    r.finish()?;
    Ok(row)
}

/// Checks an encoded row offered as a decision: one slot per member,
/// exactly `2f + 1` entries, each signed by its column's member.
pub fn validate_row_bytes(
    bytes: &[u8],
    vid: &InstanceId,
    group: &Group,
    verifier: &dyn Verifier,
) -> Result<Row, VecReject> {
    let row = decode_row(bytes)?;
    if row.len() != group.n() {
        return Err(VecReject::BadCount(row.len()));
    }
    let c = filled(&row);
    if c != 2 * group.f() + 1 {
        return Err(VecReject::BadCount(c));
    }
    for (col, e) in group.members().iter().zip(&row) {
        if let Some((v, s)) = e {
            if !check_entry(verifier, vid, *col, v, s) {
                return Err(VecReject::BadSignature(*col));
            }
        }
    }
    Ok(row)
}

/// A member's row as broadcast: only the present entries, by column id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VecRowMsg {
    pub instance: InstanceId,
    pub sender: NodeId,
    pub entries: Vec<(NodeId, Vec<u8>, Signature)>,
}

impl VecRowMsg {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(MsgType::VecRow as u8)
            .instance(&self.instance)
            .node(self.sender)
            .u16(self.entries.len() as u16);
        for (c, v, s) in &self.entries {
            w.node(*c).bytes(v).sig(s);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != MsgType::VecRow as u8 {
            return Err(WireError::Malformed("not a vector row"));
        }
        let instance = r.instance()?;
        let sender = r.node()?;
        let n = r.u16()? as usize;
        let mut entries = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            entries.push((r.node()?, r.bytes()?.to_vec(), r.sig()?));
        }
        r.finish()?;
        Ok(VecRowMsg {
            instance,
            sender,
            entries,
        })
    }

    /// Validates every entry and lays the row out by member order. Any
    /// invalid entry discards the whole message.
    pub fn to_row(&self, group: &Group, verifier: &dyn Verifier) -> Result<Row, VecReject> {
        if !group.contains(self.sender) {
            return Err(VecReject::NotMember);
        }
        if self.entries.len() > 2 * group.f() + 1 {
            return Err(VecReject::BadCount(self.entries.len()));
        }
        let mut row: Row = vec![None; group.n()];
        let mut seen = BTreeSet::new();
        for (c, v, s) in &self.entries {
            let idx = group.index_of(*c).ok_or(VecReject::BadColumn(*c))?;
            if !seen.insert(*c) {
                return Err(VecReject::DuplicateColumn(*c));
            }
            if v.len() > MAX_PROPOSAL {
                return Err(VecReject::TooLarge);
            }
            if !check_entry(verifier, &self.instance, *c, v, s) {
                return Err(VecReject::BadSignature(*c));
            }
            row[idx] = Some((v.clone(), *s));
        }
        Ok(row)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VecStats {
    pub accepted: u64,
    pub rejected: u64,
    pub mv_rounds: u32,
}

#[derive(Debug, Clone)]
pub struct VecState {
    id: InstanceId,
    group: Group,
    me: NodeId,
    my_index: usize,
    started: bool,
    array: Vec<Option<Row>>,
    own: Row,
    dirty: bool,
    round: u32,
    mv_running: bool,
    decided: Option<Vec<u8>>,
    pub stats: VecStats,
}

impl VecState {
    pub fn new(id: InstanceId, group: Group, me: NodeId) -> Result<Self, Error> {
        let my_index = group.index_of(me).ok_or(Error::NotInGroup(me))?;
        let n = group.n();
        Ok(VecState {
            id,
            group,
            me,
            my_index,
            started: false,
            array: vec![None; n],
            own: vec![None; n],
            dirty: false,
            round: 0,
            mv_running: false,
            decided: None,
            stats: VecStats::default(),
        })
    }

    pub fn id(&self) -> &InstanceId {
        &self.id
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn decided(&self) -> Option<&[u8]> {
        self.decided.as_deref()
    }

    /// Multivalued rounds started so far.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn own_row(&self) -> &Row {
        &self.own
    }

    pub fn mv_id(&self, r: u32) -> InstanceId {
        self.id.child(ProtocolTag::Multivalued, Some(r))
    }

    fn cap(&self) -> usize {
        2 * self.group.f() + 1
    }

    pub fn start(
        &mut self,
        proposal: Vec<u8>,
        key: &KeyPair,
        out: &mut Vec<Effect>,
    ) -> Result<(), Error> {
        if proposal.len() > MAX_PROPOSAL {
            return Err(Error::ProposalTooLarge {
                len: proposal.len(),
                max: MAX_PROPOSAL,
            });
        }
        if self.started {
            return Ok(());
        }
        self.started = true;
        let sig = sign_entry(key, &self.id, &proposal);
        self.own[self.my_index] = Some((proposal, sig));
        self.own_changed();
        self.flush(out);
        self.select(out);
        Ok(())
    }

    fn own_changed(&mut self) {
        self.dirty = true;
        if filled(&self.own) == self.cap() {
            self.array[self.my_index] = Some(self.own.clone());
        }
    }

    fn flush(&mut self, out: &mut Vec<Effect>) {
        if !self.dirty || !self.started {
            return;
        }
        self.dirty = false;
        let entries = self
            .group
            .members()
            .iter()
            .zip(&self.own)
            .filter_map(|(c, e)| e.as_ref().map(|(v, s)| (*c, v.clone(), *s)))
            .collect();
        let msg = VecRowMsg {
            instance: self.id.clone(),
            sender: self.me,
            entries,
        };
        out.push(Effect::Rrb(msg.encode()));
    }

    pub fn wants_tick(&self) -> bool {
        self.dirty && self.decided.is_none()
    }

    /// Sends the local row if it changed since the last broadcast.
    pub fn on_tick(&mut self, out: &mut Vec<Effect>) {
        if self.decided.is_none() {
            self.flush(out);
        }
    }

    /// Handles a row whose reliable broadcast origin is `msg.sender`.
    pub fn on_message(
        &mut self,
        msg: &VecRowMsg,
        verifier: &dyn Verifier,
        out: &mut Vec<Effect>,
    ) -> Result<(), VecReject> {
        if msg.sender == self.me {
            return Ok(());
        }
        let row = match msg.to_row(&self.group, verifier) {
            Ok(r) => r,
            Err(e) => {
                self.stats.rejected += 1;
                return Err(e);
            }
        };
        self.stats.accepted += 1;
        let j = self.group.index_of(msg.sender).expect("checked member");
        let own_entry = row[j].clone();
        if filled(&row) == self.cap() && self.array[j].is_none() {
            self.array[j] = Some(row);
        }
        if self.started && filled(&self.own) < self.cap() && self.own[j].is_none() {
            if let Some(e) = own_entry {
                self.own[j] = Some(e);
                self.own_changed();
            }
        }
        self.select(out);
        Ok(())
    }

    fn select(&mut self, out: &mut Vec<Effect>) {
        if !self.started || self.mv_running || self.decided.is_some() {
            return;
        }
        let n = self.group.n();
        let pick = (0..n)
            .map(|index| (self.round as usize + index) % n)
            .find(|j| self.array[*j].is_some());
        let Some(j) = pick else { return };
        let proposal = encode_row(self.array[j].as_ref().expect("picked row"));
        self.mv_running = true;
        self.stats.mv_rounds += 1;
        out.push(Effect::StartMultivalued {
            id: self.mv_id(self.round),
            proposal,
        });
    }

    /// Result of the multivalued round currently running.
    pub fn on_mv(&mut self, round: u32, result: Option<Vec<u8>>, out: &mut Vec<Effect>) {
        if round != self.round || !self.mv_running || self.decided.is_some() {
            return;
        }
        self.mv_running = false;
        match result {
            Some(v) => {
                self.decided = Some(v);
                out.push(Effect::Decided);
            }
            None => {
                self.round += 1;
                self.select(out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::KeyDirectory;

    fn setup() -> (Vec<KeyPair>, KeyDirectory, Group, InstanceId) {
        let (keys, dir) = KeyDirectory::simulated(4, 5);
        let group = Group::new((0..4).map(NodeId).collect(), 1).unwrap();
        (keys, dir, group, InstanceId::new("v", ProtocolTag::Vector))
    }

    fn row_msg(keys: &[KeyPair], id: &InstanceId, sender: usize, cols: &[usize]) -> VecRowMsg {
        VecRowMsg {
            instance: id.clone(),
            sender: keys[sender].node(),
            entries: cols
                .iter()
                .map(|c| {
                    let v = alloc::format!("p{c}").into_bytes();
                    (keys[*c].node(), v.clone(), sign_entry(&keys[*c], id, &v))
                })
                .collect(),
        }
    }

    #[test]
    fn row_codec_round_trip() {
        let (keys, dir, g, id) = setup();
        let m = row_msg(&keys, &id, 1, &[0, 1, 3]);
        assert_eq!(VecRowMsg::decode(&m.encode()).unwrap(), m);
        let row = m.to_row(&g, &dir).unwrap();
        let bytes = encode_row(&row);
        assert_eq!(validate_row_bytes(&bytes, &id, &g, &dir).unwrap(), row);
    }

    #[test]
    fn invalid_entry_discards_row() {
        let (keys, dir, g, id) = setup();
        let mut m = row_msg(&keys, &id, 1, &[0, 1, 3]);
        m.entries[2].1 = b"other".to_vec();
        assert_eq!(m.to_row(&g, &dir), Err(VecReject::BadSignature(NodeId(3))));
        let m = row_msg(&keys, &id, 1, &[0, 1, 2, 3]);
        assert_eq!(m.to_row(&g, &dir), Err(VecReject::BadCount(4)));
        let m = row_msg(&keys, &id, 1, &[0, 0]);
        assert!(m.to_row(&g, &dir).is_err());
    }

    #[test]
    fn decided_row_needs_exactly_cap_entries() {
        let (keys, dir, g, id) = setup();
        let row = row_msg(&keys, &id, 1, &[0, 1]).to_row(&g, &dir).unwrap();
        assert_eq!(
            validate_row_bytes(&encode_row(&row), &id, &g, &dir),
            Err(VecReject::BadCount(2))
        );
    }

    #[test]
    fn stores_complete_rows_and_caps_own_row() {
        let (keys, dir, g, id) = setup();
        let mut st = VecState::new(id.clone(), g, NodeId(0)).unwrap();
        let mut out = vec![];
        st.start(b"p0".to_vec(), &keys[0], &mut out).unwrap();
        assert!(matches!(out[0], Effect::Rrb(_)));
        out.clear();
        st.on_message(&row_msg(&keys, &id, 1, &[1]), &dir, &mut out).unwrap();
        st.on_message(&row_msg(&keys, &id, 2, &[2, 3]), &dir, &mut out).unwrap();
        assert_eq!(filled(st.own_row()), 3);
        // own row complete: a multivalued round starts over some complete row
        assert!(out.iter().any(|e| matches!(e, Effect::StartMultivalued { .. })));
        st.on_message(&row_msg(&keys, &id, 3, &[3]), &dir, &mut out).unwrap();
        assert_eq!(filled(st.own_row()), 3, "own row never exceeds 2f+1");
        out.clear();
        st.on_mv(0, None, &mut out);
        match &out[0] {
            Effect::StartMultivalued { id: mid, .. } => assert_eq!(mid.sub_round, Some(1)),
            e => panic!("{e:?}"),
        }
        out.clear();
        st.on_mv(1, Some(b"row".to_vec()), &mut out);
        assert_eq!(st.decided(), Some(&b"row"[..]));
    }
}
