//! Identities and message authentication.
//!
//! Signing goes through [`KeyPair::sign`]; verification goes through the
//! [`Verifier`] trait so that the key distribution mechanism is pluggable.
//! [`KeyDirectory`] is the global directory used inside the simulator.
//!
//! The default scheme is a deterministic keyed SHA-256 authenticator. It is
//! unforgeable by any party that does not hold the directory, which is all
//! the protocols require, and it is fast enough for large seeded sweeps. An
//! Ed25519 scheme is available behind the `ed25519` feature.

use alloc::collections::BTreeMap;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::id::NodeId;

pub const MAX_SIGNATURE_LEN: usize = 64;

/// SHA-256 of `data`.
pub fn digest(data: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(Sha256::digest(data).as_slice());
    out
}

/// First eight bytes of the SHA-256 digest, used for compact trace lines.
pub fn short_digest(data: &[u8]) -> u64 {
    let d = digest(data);
    u64::from_be_bytes([d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7]])
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    len: u8,
    bytes: [u8; MAX_SIGNATURE_LEN],
}

impl Signature {
    pub fn from_slice(raw: &[u8]) -> Option<Self> {
        if raw.len() > MAX_SIGNATURE_LEN {
            return None;
        }
        let mut bytes = [0u8; MAX_SIGNATURE_LEN];
        bytes[..raw.len()].copy_from_slice(raw);
        Some(Signature {
            len: raw.len() as u8,
            bytes,
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    /// Returns a copy with one bit flipped; handy for tamper tests.
    pub fn corrupted(&self) -> Self {
        let mut out = *self;
        if out.len > 0 {
            out.bytes[0] ^= 0x01;
        }
        out
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature(")?;
        for b in self.as_bytes().iter().take(6) {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct PublicKey(pub [u8; 32]);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Simulated,
    #[cfg(feature = "ed25519")]
    Ed25519,
}

#[derive(Clone)]
pub struct KeyPair {
    node: NodeId,
    scheme: Scheme,
    public: PublicKey,
    secret: [u8; 32],
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("node", &self.node)
            .field("scheme", &self.scheme)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

fn derive_secret(node: NodeId, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"sitan/secret");
    h.update(seed.to_be_bytes());
    h.update(node.0.to_be_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(h.finalize().as_slice());
    out
}

fn sim_public(secret: &[u8; 32]) -> PublicKey {
    let mut h = Sha256::new();
    h.update(b"sitan/public");
    h.update(secret);
    let mut out = [0u8; 32];
    out.copy_from_slice(h.finalize().as_slice());
    PublicKey(out)
}

fn sim_tag(secret: &[u8; 32], msg: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(secret);
    h.update(msg);
    let mut out = [0u8; 32];
    out.copy_from_slice(h.finalize().as_slice());
    out
}

impl KeyPair {
    /// Deterministic simulation-grade key pair derived from `(node, seed)`.
    pub fn simulated(node: NodeId, seed: u64) -> Self {
        let secret = derive_secret(node, seed);
        KeyPair {
            node,
            scheme: Scheme::Simulated,
            public: sim_public(&secret),
            secret,
        }
    }

    #[cfg(feature = "ed25519")]
    pub fn ed25519(node: NodeId, seed: u64) -> Self {
        let secret = derive_secret(node, seed);
        let signing = ed25519_dalek::SigningKey::from_bytes(&secret);
        KeyPair {
            node,
            scheme: Scheme::Ed25519,
            public: PublicKey(signing.verifying_key().to_bytes()),
            secret,
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        match self.scheme {
            Scheme::Simulated => {
                Signature::from_slice(&sim_tag(&self.secret, msg)).expect("32 byte tag")
            }
            #[cfg(feature = "ed25519")]
            Scheme::Ed25519 => {
                use ed25519_dalek::Signer;
                let signing = ed25519_dalek::SigningKey::from_bytes(&self.secret);
                Signature::from_slice(&signing.sign(msg).to_bytes()).expect("64 byte signature")
            }
        }
    }
}

/// Signature verification against the key registered for a process.
pub trait Verifier: Send + Sync {
    fn verify(&self, signer: NodeId, msg: &[u8], sig: &Signature) -> bool;
}

#[derive(Clone)]
struct DirectoryEntry {
    public: PublicKey,
    scheme: Scheme,
    // Verification material for the simulated scheme. Never leaves the directory.
    sim_secret: Option<[u8; 32]>,
}

/// Global key directory. Plays the role of the certificate authority that
/// the system model assumes: every process can obtain and check any public
/// key it needs.
#[derive(Clone, Default)]
pub struct KeyDirectory {
    entries: BTreeMap<NodeId, DirectoryEntry>,
    by_public: BTreeMap<PublicKey, NodeId>,
}

impl KeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds simulated key pairs for nodes `0..n` and a directory holding them.
    pub fn simulated(n: usize, seed: u64) -> (alloc::vec::Vec<KeyPair>, Self) {
        let keys: alloc::vec::Vec<KeyPair> = (0..n as u32)
            .map(|i| KeyPair::simulated(NodeId(i), seed))
            .collect();
        let mut dir = KeyDirectory::new();
        for k in &keys {
            dir.register(k);
        }
        (keys, dir)
    }

    pub fn register(&mut self, key: &KeyPair) {
        let sim_secret = match key.scheme {
            Scheme::Simulated => Some(key.secret),
            #[cfg(feature = "ed25519")]
            Scheme::Ed25519 => None,
        };
        self.entries.insert(
            key.node,
            DirectoryEntry {
                public: key.public,
                scheme: key.scheme,
                sim_secret,
            },
        );
        self.by_public.insert(key.public, key.node);
    }

    pub fn public_key(&self, node: NodeId) -> Option<PublicKey> {
        self.entries.get(&node).map(|e| e.public)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Verifies `sig` over `msg` under the given public key.
    pub fn verify_with(&self, public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        match self.by_public.get(public) {
            Some(node) => self.verify(*node, msg, sig),
            None => false,
        }
    }
}

impl Verifier for KeyDirectory {
    fn verify(&self, signer: NodeId, msg: &[u8], sig: &Signature) -> bool {
        let Some(entry) = self.entries.get(&signer) else {
            return false;
        };
        match entry.scheme {
            Scheme::Simulated => match &entry.sim_secret {
                Some(secret) => sig.as_bytes() == sim_tag(secret, msg),
                None => false,
            },
            #[cfg(feature = "ed25519")]
            Scheme::Ed25519 => {
                use ed25519_dalek::Verifier as _;
                let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&entry.public.0) else {
                    return false;
                };
                let Ok(raw) = <[u8; 64]>::try_from(sig.as_bytes()) else {
                    return false;
                };
                vk.verify(msg, &ed25519_dalek::Signature::from_bytes(&raw))
                    .is_ok()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> (alloc::vec::Vec<KeyPair>, KeyDirectory) {
        KeyDirectory::simulated(2, 7)
    }

    #[test]
    fn empty_payload_round_trip() {
        let (keys, dir) = dir();
        let s = keys[0].sign(b"");
        assert!(dir.verify_with(&keys[0].public_key(), b"", &s));
        assert!(dir.verify(NodeId(0), b"", &s));
    }

    #[test]
    fn tampered_payload_is_rejected() {
        let (keys, dir) = dir();
        let mut p = *b"converge r1 v1";
        let s = keys[0].sign(&p);
        p[3] ^= 0x10;
        assert!(!dir.verify(NodeId(0), &p, &s));
        assert!(!dir.verify(NodeId(0), b"converge r1 v1", &s.corrupted()));
    }

    #[test]
    fn wrong_key_is_rejected() {
        let (keys, dir) = dir();
        let s = keys[0].sign(b"hello");
        assert!(!dir.verify_with(&keys[1].public_key(), b"hello", &s));
        assert!(!dir.verify(NodeId(1), b"hello", &s));
        assert!(!dir.verify(NodeId(9), b"hello", &s));
    }

    #[test]
    fn keys_are_deterministic_per_seed() {
        assert_eq!(
            KeyPair::simulated(NodeId(3), 1).public_key(),
            KeyPair::simulated(NodeId(3), 1).public_key()
        );
        assert_ne!(
            KeyPair::simulated(NodeId(3), 1).public_key(),
            KeyPair::simulated(NodeId(3), 2).public_key()
        );
    }

    #[cfg(feature = "ed25519")]
    #[test]
    fn ed25519_plugin_verifies() {
        let k0 = KeyPair::ed25519(NodeId(0), 1);
        let k1 = KeyPair::ed25519(NodeId(1), 1);
        let mut dir = KeyDirectory::new();
        dir.register(&k0);
        dir.register(&k1);
        let s = k0.sign(b"m");
        assert_eq!(s.as_bytes().len(), 64);
        assert!(dir.verify(NodeId(0), b"m", &s));
        assert!(!dir.verify(NodeId(1), b"m", &s));
        assert!(!dir.verify(NodeId(0), b"n", &s));
    }
}
