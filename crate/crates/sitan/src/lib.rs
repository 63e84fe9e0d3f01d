//! Simulation, fault injection and experiment harness for the protocol
//! stack in `sitan-core`.

pub mod adversary;
pub mod audit;
pub mod harness;
pub mod netsim;
pub mod trace;
