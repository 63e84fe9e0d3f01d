//! Signed decisions for nodes outside the consensus group.
//!
//! Every group member that decides signs `(instance, value)` and sends a
//! DECISION by reliable broadcast. Outsiders accept a value once `f + 1`
//! distinct group members signed it, so at least one correct member vouches
//! for it. Accepted values and their signatures form a certificate that
//! answers RESULT_QUERY messages from recovering nodes.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::auth::{KeyPair, Signature, Verifier};
use crate::consensus::sign_bytes;
use crate::id::NodeId;
use crate::instance::InstanceId;
use crate::wire::{MsgType, Reader, WireError, Writer};

pub const DOMAIN: u8 = b'D';

pub fn sign_decision(key: &KeyPair, instance: &InstanceId, value: &[u8]) -> Signature {
    key.sign(&sign_bytes(DOMAIN, instance, key.node(), 0, value))
}

pub fn check_decision(
    verifier: &dyn Verifier,
    instance: &InstanceId,
    signer: NodeId,
    value: &[u8],
    sig: &Signature,
) -> bool {
    verifier.verify(signer, &sign_bytes(DOMAIN, instance, signer, 0, value), sig)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionMsg {
    pub instance: InstanceId,
    pub value: Vec<u8>,
    pub signer: NodeId,
    pub sig: Signature,
    /// The group the signer decided in; outsiders need it to count signers.
    pub group: Vec<NodeId>,
    pub f: u32,
}

impl DecisionMsg {
    pub fn new(key: &KeyPair, instance: InstanceId, value: Vec<u8>, group: Vec<NodeId>, f: usize) -> Self {
        let sig = sign_decision(key, &instance, &value);
        DecisionMsg {
            instance,
            value,
            signer: key.node(),
            sig,
            group,
            f: f as u32,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(MsgType::Decision as u8)
            .instance(&self.instance)
            .bytes(&self.value)
            .node(self.signer)
            .sig(&self.sig)
            .nodes(&self.group)
            .u32(self.f);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != MsgType::Decision as u8 {
            return Err(WireError::Malformed("not a decision"));
        }
        let m = DecisionMsg {
            instance: r.instance()?,
            value: r.bytes()?.to_vec(),
            signer: r.node()?,
            sig: r.sig()?,
            group: r.nodes()?,
            f: r.u32()?,
        };
        r.finish()?;
        Ok(m)
    }
}

/// A decided value with at least `f + 1` member signatures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub instance: InstanceId,
    pub value: Vec<u8>,
    pub signatures: Vec<(NodeId, Signature)>,
}

impl Certificate {
    /// Valid when `f + 1` distinct members of `group` signed the value.
    pub fn verify(&self, group: &[NodeId], f: usize, verifier: &dyn Verifier) -> bool {
        let mut signers: Vec<NodeId> = Vec::new();
        for (s, sig) in &self.signatures {
            if !group.contains(s) || signers.contains(s) {
                continue;
            }
            if check_decision(verifier, &self.instance, *s, &self.value, sig) {
                signers.push(*s);
            }
        }
        signers.len() > f
    }
}

pub fn encode_query(instance: &InstanceId) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(MsgType::ResultQuery as u8).instance(instance);
    w.finish()
}

pub fn decode_query(bytes: &[u8]) -> Result<InstanceId, WireError> {
    let mut r = Reader::new(bytes);
    if r.u8()? != MsgType::ResultQuery as u8 {
        return Err(WireError::Malformed("not a result query"));
    }
    let id = r.instance()?;
    r.finish()?;
    Ok(id)
}

/// RESULT_REPLY: the certificate plus the group it was signed in.
pub fn encode_reply(cert: &Certificate, group: &[NodeId], f: usize) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(MsgType::ResultReply as u8)
        .instance(&cert.instance)
        .bytes(&cert.value)
        .nodes(group)
        .u32(f as u32)
        .u16(cert.signatures.len() as u16);
    for (s, sig) in &cert.signatures {
        w.node(*s).sig(sig);
    }
    w.finish()
}

pub fn decode_reply(bytes: &[u8]) -> Result<(Certificate, Vec<NodeId>, usize), WireError> {
    let mut r = Reader::new(bytes);
    if r.u8()? != MsgType::ResultReply as u8 {
        return Err(WireError::Malformed("not a result reply"));
    }
    let instance = r.instance()?;
    let value = r.bytes()?.to_vec();
    let group = r.nodes()?;
    let f = r.u32()? as usize;
    let n = r.u16()? as usize;
    let mut signatures = Vec::with_capacity(n.min(256));
    for _ in 0..n {
        signatures.push((r.node()?, r.sig()?));
    }
    r.finish()?;
    Ok((
        Certificate {
            instance,
            value,
            signatures,
        },
        group,
        f,
    ))
}

/// Collects DECISION messages until some value has `f + 1` valid signers
/// from the group the accepting node believes in.
#[derive(Debug, Clone, Default)]
pub struct DecisionCollector {
    votes: BTreeMap<InstanceId, BTreeMap<Vec<u8>, BTreeMap<NodeId, Signature>>>,
    accepted: BTreeMap<InstanceId, Certificate>,
}

impl DecisionCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accepted(&self, id: &InstanceId) -> Option<&Certificate> {
        self.accepted.get(id)
    }

    pub fn insert_certificate(&mut self, cert: Certificate) {
        self.accepted.entry(cert.instance.clone()).or_insert(cert);
    }

    /// Returns the certificate the first time the value is accepted. The
    /// signer must belong to `group`, the local node's view of the sink.
    pub fn on_decision(
        &mut self,
        msg: &DecisionMsg,
        group: &[NodeId],
        f: usize,
        verifier: &dyn Verifier,
    ) -> Option<Certificate> {
        if self.accepted.contains_key(&msg.instance) || !group.contains(&msg.signer) {
            return None;
        }
        if !check_decision(verifier, &msg.instance, msg.signer, &msg.value, &msg.sig) {
            return None;
        }
        let by_value = self.votes.entry(msg.instance.clone()).or_default();
        let signers = by_value.entry(msg.value.clone()).or_default();
        signers.insert(msg.signer, msg.sig);
        if signers.len() <= f {
            return None;
        }
        let cert = Certificate {
            instance: msg.instance.clone(),
            value: msg.value.clone(),
            signatures: signers.iter().map(|(s, g)| (*s, *g)).collect(),
        };
        self.votes.remove(&msg.instance);
        self.accepted.insert(msg.instance.clone(), cert.clone());
        Some(cert)
    }
}
