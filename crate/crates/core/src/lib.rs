//! Byzantine fault-tolerant protocol stack for ad hoc networks with unknown
//! participants.
//!
//! Every layer is a sans-IO state machine: it consumes received bytes and
//! timer expirations and produces transmissions, timer requests and events.
//! The [`node::Node`] type composes the layers for one process. Time is an
//! abstract millisecond counter supplied by the caller, which keeps the crate
//! `no_std` and the execution deterministic.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod auth;
pub mod cache;
pub mod comm;
pub mod consensus;
pub mod error;
pub mod id;
pub mod instance;
pub mod membership;
pub mod node;
pub mod quorum;
pub mod wire;

pub use auth::{KeyDirectory, KeyPair, PublicKey, Signature, Verifier};
pub use cache::ResultCache;
pub use error::Error;
pub use id::{NodeId, SimTime};
pub use instance::{InstanceId, InstanceRegistry, ProtocolTag};
pub use node::{Node, NodeConfig, NodeEvent, Output, Proposal, TimerKey};
pub use quorum::{quorum, FaultBudget};
