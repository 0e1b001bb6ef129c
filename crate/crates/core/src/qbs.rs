//! Quantum Base Station types: QIDs, registries, the session state machine
//! and the per-station state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::CircuitId;
use crate::codec::CodecError;
use crate::NodeId;

/// Globally unique Quantum Circuit ID of an end user.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Qid(pub u64);

impl fmt::Display for Qid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("QID {0} is already registered")]
    DuplicateQid(Qid),
    #[error("node name {0:?} is already in use")]
    DuplicateName(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not a child QBS")]
    NotAChild(NodeId),
    #[error("node {0} is not a mother QBS")]
    NotAMother(NodeId),
    #[error("caller QID {0} is not attached to any QBS")]
    CallerUnknown(Qid),
    #[error("QID {0} cannot open a session to itself")]
    SelfCall(Qid),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} is not established")]
    SessionNotEstablished(SessionId),
    #[error("QID {qid} is not a party of session {session}")]
    NotAParty { session: SessionId, qid: Qid },
    #[error("illegal session transition {from:?} -> {to:?}")]
    IllegalTransition { from: SessionState, to: SessionState },
    #[error("{a} and {b} cannot be linked by mother {mother}")]
    NotBrokerable { mother: NodeId, a: NodeId, b: NodeId },
    #[error("circuit {0} is permanent")]
    PermanentCircuit(CircuitId),
    #[error("unknown circuit {0}")]
    UnknownCircuit(CircuitId),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Held by a child: the user is attached here.
    LocalUser(NodeId),
    /// Held by a mother: the child the user is attached to.
    ChildQbs(NodeId),
    /// Held by a mother: the peer mother whose planet owns the QID.
    RemotePlanet(NodeId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    entries: BTreeMap<Qid, Location>,
}

impl Registry {
    pub fn get(&self, qid: Qid) -> Option<Location> {
        self.entries.get(&qid).copied()
    }

    pub fn insert(&mut self, qid: Qid, location: Location) -> Option<Location> {
        self.entries.insert(qid, location)
    }

    pub fn contains(&self, qid: Qid) -> bool {
        self.entries.contains_key(&qid)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Qid, Location)> + '_ {
        self.entries.iter().map(|(q, l)| (*q, *l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NotFound,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    LookingUpLocal,
    QueryingMother,
    Negotiating,
    Established,
    TearingDown,
    Closed,
    Failed(FailureReason),
}

impl SessionState {
    /// The legal-transition relation of the session state machine.
    pub fn can_transition_to(self, next: SessionState) -> bool {
        use FailureReason::*;
        use SessionState::*;
        matches!(
            (self, next),
            (Idle, LookingUpLocal)
                | (LookingUpLocal, Negotiating)
                | (LookingUpLocal, QueryingMother)
                | (LookingUpLocal, Failed(NotFound))
                | (QueryingMother, Negotiating)
                | (QueryingMother, Failed(NotFound))
                | (Negotiating, Established)
                | (Negotiating, Failed(Rejected))
                | (Established, TearingDown)
                | (TearingDown, Closed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Closed | SessionState::Failed(_))
    }
}

#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub session_id: SessionId,
    pub caller: Qid,
    pub callee: Qid,
    state: SessionState,
    /// Relay hops from caller to callee, filled in once the callee's station
    /// is known.
    pub path: Vec<NodeId>,
    /// Circuits held by the session. When established, `circuits[i]` links
    /// `path[i]` and `path[i + 1]`.
    pub circuits: Vec<CircuitId>,
    /// The caller's home child, which owns this record.
    pub owner: NodeId,
    pub requested_at: u64,
    pub established_at: Option<u64>,
    pub close_after_delivery: bool,
    /// Messages sent and delivered, caller-to-callee then callee-to-caller.
    pub sent: [u64; 2],
    pub delivered: [u64; 2],
    pub(crate) timeout: Option<u64>,
    pub(crate) callee_accepted: bool,
}

impl SessionRecord {
    pub fn new(session_id: SessionId, caller: Qid, callee: Qid, owner: NodeId, now: u64) -> Self {
        SessionRecord {
            session_id,
            caller,
            callee,
            state: SessionState::Idle,
            path: Vec::new(),
            circuits: Vec::new(),
            owner,
            requested_at: now,
            established_at: None,
            close_after_delivery: false,
            sent: [0; 2],
            delivered: [0; 2],
            timeout: None,
            callee_accepted: false,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn transition(&mut self, next: SessionState) -> Result<(), ProtocolError> {
        if !self.state.can_transition_to(next) {
            return Err(ProtocolError::IllegalTransition {
                from: self.state,
                to: next,
            });
        }
        self.state = next;
        Ok(())
    }

    pub fn is_cross_qbs(&self) -> bool {
        self.path.len() == 4
    }

    pub fn is_party(&self, qid: Qid) -> bool {
        self.caller == qid || self.callee == qid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbsKind {
    Child { mother: NodeId },
    Mother,
}

#[derive(Debug, Clone)]
pub struct QbsNode {
    pub qbs_id: NodeId,
    pub kind: QbsKind,
    pub registry: Registry,
    pub sessions: BTreeMap<SessionId, SessionRecord>,
    /// Every circuit this station terminates, with the far end.
    pub circuits: BTreeMap<CircuitId, NodeId>,
    /// Children of a mother; empty for a child.
    pub children: BTreeSet<NodeId>,
}

impl QbsNode {
    pub fn new(qbs_id: NodeId, kind: QbsKind) -> Self {
        QbsNode {
            qbs_id,
            kind,
            registry: Registry::default(),
            sessions: BTreeMap::new(),
            circuits: BTreeMap::new(),
            children: BTreeSet::new(),
        }
    }

    pub fn is_mother(&self) -> bool {
        self.kind == QbsKind::Mother
    }

    pub fn mother(&self) -> Option<NodeId> {
        match self.kind {
            QbsKind::Child { mother } => Some(mother),
            QbsKind::Mother => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalLookup {
    Found(NodeId),
    NotFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalLookup {
    ChildQbs(NodeId),
    /// Resolved through the peer `mother` to its `child`.
    RemotePlanet { mother: NodeId, child: NodeId },
    NotFound,
}
