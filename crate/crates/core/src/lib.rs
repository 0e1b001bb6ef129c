//! Deterministic discrete-event simulator of an entanglement-based data
//! network.
//!
//! End users hold a [`Qid`] and attach to a child Quantum Base Station; each
//! planet has one mother station acting as QID registry and circuit broker.
//! Data crosses entangled circuits as 128-bit frames written onto Tx plates
//! and read back, inverted, from the partner Rx plates.
//!
//! The usual entry point is [`Simulation`], built from a [`Scenario`].

use std::fmt;

use serde::Serialize;

pub mod circuit;
pub mod codec;
pub mod entanglement;
pub mod network;
pub mod qbs;
pub mod scenario;
pub mod sim;
pub mod user;

pub use circuit::{Circuit, CircuitId, CircuitScope};
pub use codec::{Frame, MessageBuffer, Reassembly};
pub use entanglement::{Direction, PairPool, Plate, Spin};
pub use network::Network;
pub use qbs::{FailureReason, ProtocolError, Qid, SessionId, SessionRecord, SessionState};
pub use scenario::{Scenario, ValidationError};
pub use sim::{LatencyReport, RecordType, SimConfig, SimError, Simulation, Stats, TraceRecord};
pub use user::{AcceptPolicy, Decision, UserNode};

/// Index of a node (user, child or mother station) within one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}
