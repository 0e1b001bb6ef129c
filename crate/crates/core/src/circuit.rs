//! Entangled circuits: a pair of plate arrays linking two nodes, one per
//! direction, backed by a private pair pool.

use std::fmt;

use serde::Serialize;

use crate::codec::{decode_frame, encode_frame, CodecError, Frame};
use crate::entanglement::{PairPool, Plate};
use crate::qbs::SessionId;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CircuitId(pub u64);

impl fmt::Display for CircuitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircuitScope {
    /// Topology circuit: user-child, child-mother or mother-mother.
    Permanent,
    /// Child-child circuit owned by one session and released at teardown.
    Session(SessionId),
}

#[derive(Debug, Clone)]
struct Lane {
    tx: Plate,
    rx: Plate,
}

#[derive(Debug, Clone)]
pub struct Circuit {
    id: CircuitId,
    ends: (NodeId, NodeId),
    scope: CircuitScope,
    pool: PairPool,
    forward: Lane,
    backward: Lane,
    frames_carried: u64,
}

impl Circuit {
    /// `seed` keys the pool; the circuit id selects its stream.
    pub fn new(id: CircuitId, a: NodeId, b: NodeId, scope: CircuitScope, seed: u64) -> Self {
        let mut pool = PairPool::with_stream(seed, id.0);
        let (tx, rx) = pool.make_plate_pair();
        let forward = Lane { tx, rx };
        let (tx, rx) = pool.make_plate_pair();
        let backward = Lane { tx, rx };
        Circuit {
            id,
            ends: (a, b),
            scope,
            pool,
            forward,
            backward,
            frames_carried: 0,
        }
    }

    pub fn id(&self) -> CircuitId {
        self.id
    }

    pub fn ends(&self) -> (NodeId, NodeId) {
        self.ends
    }

    pub fn scope(&self) -> CircuitScope {
        self.scope
    }

    pub fn is_permanent(&self) -> bool {
        self.scope == CircuitScope::Permanent
    }

    pub fn connects(&self, x: NodeId, y: NodeId) -> bool {
        self.ends == (x, y) || self.ends == (y, x)
    }

    pub fn peer_of(&self, node: NodeId) -> Option<NodeId> {
        match self.ends {
            (a, b) if a == node => Some(b),
            (a, b) if b == node => Some(a),
            _ => None,
        }
    }

    pub fn frames_carried(&self) -> u64 {
        self.frames_carried
    }

    pub fn pool(&self) -> &PairPool {
        &self.pool
    }

    /// Sends one frame from `from` to the other end.
    ///
    /// The sender's compiler triggers its Tx plate, the far observer reads the
    /// Rx plate in the same step, and the lane is re-provisioned for the next
    /// frame. Returns what the receiver decoded.
    pub fn transmit(&mut self, from: NodeId, frame: Frame) -> Result<Frame, CodecError> {
        let lane = if from == self.ends.0 {
            &mut self.forward
        } else {
            assert_eq!(from, self.ends.1, "{from} is not an end of circuit {}", self.id);
            &mut self.backward
        };
        encode_frame(&mut self.pool, &lane.tx, frame)?;
        let received = decode_frame(&mut self.pool, &lane.rx)?;
        self.pool.reset_plate_pair(&mut lane.tx, &mut lane.rx)?;
        self.frames_carried += 1;
        Ok(received)
    }

    /// Plate generations of the (forward, backward) lanes.
    pub fn generations(&self) -> (u64, u64) {
        (self.forward.tx.generation(), self.backward.tx.generation())
    }
}
