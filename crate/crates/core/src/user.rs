//! End users: a QID attached to one child station, with a fixed accept
//! policy and an inbox of completed messages.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitId;
use crate::codec::MessageBuffer;
use crate::qbs::{Qid, SessionId};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptPolicy {
    AcceptAll,
    RejectAll,
    AcceptList(BTreeSet<Qid>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InboxEntry {
    pub tick: u64,
    pub session: SessionId,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct UserNode {
    pub node_id: NodeId,
    pub qid: Qid,
    pub home_qbs: NodeId,
    pub accept_policy: AcceptPolicy,
    pub access_circuit: Option<CircuitId>,
    pub active_sessions: BTreeSet<SessionId>,
    inbox: Vec<InboxEntry>,
    pub(crate) reassembly: BTreeMap<SessionId, MessageBuffer>,
    /// Payloads to send as soon as the session is established.
    pub(crate) outbox: BTreeMap<SessionId, Vec<u8>>,
}

impl UserNode {
    pub fn new(node_id: NodeId, qid: Qid, home_qbs: NodeId, accept_policy: AcceptPolicy) -> Self {
        UserNode {
            node_id,
            qid,
            home_qbs,
            accept_policy,
            access_circuit: None,
            active_sessions: BTreeSet::new(),
            inbox: Vec::new(),
            reassembly: BTreeMap::new(),
            outbox: BTreeMap::new(),
        }
    }

    pub fn decide(&self, caller: Qid) -> Decision {
        let accept = match &self.accept_policy {
            AcceptPolicy::AcceptAll => true,
            AcceptPolicy::RejectAll => false,
            AcceptPolicy::AcceptList(allowed) => allowed.contains(&caller),
        };
        if accept {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }

    pub(crate) fn deliver(&mut self, tick: u64, session: SessionId, payload: Vec<u8>) {
        self.inbox.push(InboxEntry {
            tick,
            session,
            payload,
        });
    }

    pub fn inbox(&self) -> &[InboxEntry] {
        &self.inbox
    }

    /// Drains completed messages ordered by completion tick, then session id.
    pub fn receive_poll(&mut self) -> Vec<(SessionId, Vec<u8>)> {
        let mut entries = std::mem::take(&mut self.inbox);
        entries.sort_by_key(|e| (e.tick, e.session));
        entries.into_iter().map(|e| (e.session, e.payload)).collect()
    }
}
