//! Session signaling and data relay between users and stations.
//!
//! Stations charge one tick of processing for every message they send on;
//! users act within the tick of the event that reaches them. Entangled
//! channels add no delay, so a frame crossing `k` relaying stations arrives
//! `k` ticks after it was sent, whatever the distances involved.

use serde_json::json;

use super::engine::{SimError, Simulation};
use super::trace::RecordType;
use crate::circuit::CircuitId;
use crate::codec::{segment_message, Frame, MessageBuffer, Reassembly};
use crate::network::Node;
use crate::qbs::{
    FailureReason, LocalLookup, Location, ProtocolError, Qid, SessionId, SessionRecord,
    SessionState,
};
use crate::user::Decision;
use crate::NodeId;

/// Processing cost of a station step.
pub const STATION_TICKS: u64 = 1;

#[derive(Debug, Clone)]
pub(crate) enum Action {
    /// Workload item at the caller: open a session, send `payload`, close.
    Start { callee: Qid, payload: Vec<u8> },
    SessionRequest { session: SessionId },
    MotherQuery { session: SessionId, origin: NodeId, callee: Qid },
    PeerQuery { session: SessionId, origin: NodeId, home: NodeId, callee: Qid },
    PeerReply { session: SessionId, origin: NodeId, child: Option<NodeId> },
    MotherReply { session: SessionId, remote: Option<(NodeId, CircuitId)> },
    Handoff { session: SessionId, caller: Qid, callee: Qid },
    Negotiate { session: SessionId, caller: Qid, via: NodeId },
    Answer { session: SessionId, owner: NodeId, callee: Option<NodeId> },
    NegotiationTimeout { session: SessionId },
    Established { session: SessionId },
    Closed { session: SessionId },
    SendMessage { session: SessionId, payload: Vec<u8> },
    Relay { session: SessionId, reverse: bool, hop: usize, msg: u64, index: usize, frame: Frame },
    Delivered { session: SessionId, owner: NodeId },
    Teardown { session: SessionId },
}

impl Simulation {
    pub(crate) fn dispatch(&mut self, target: NodeId, action: Action) -> Result<(), SimError> {
        match action {
            Action::Start { callee, payload } => self.on_start(target, callee, payload),
            Action::SessionRequest { session } => self.on_session_request(target, session),
            Action::MotherQuery { session, origin, callee } => {
                self.on_mother_query(target, session, origin, callee)
            }
            Action::PeerQuery { session, origin, home, callee } => {
                self.on_peer_query(target, session, origin, home, callee)
            }
            Action::PeerReply { session, origin, child } => {
                self.on_peer_reply(target, session, origin, child)
            }
            Action::MotherReply { session, remote } => self.on_mother_reply(target, session, remote),
            Action::Handoff { session, caller, callee } => {
                self.on_handoff(target, session, caller, callee)
            }
            Action::Negotiate { session, caller, via } => {
                self.on_negotiate(target, session, caller, via)
            }
            Action::Answer { session, owner, callee } => self.on_answer(target, session, owner, callee),
            Action::NegotiationTimeout { session } => self.on_timeout(session),
            Action::Established { session } => self.on_established_notice(target, session),
            Action::Closed { session } => self.on_closed_notice(target, session),
            Action::SendMessage { session, payload } => self.on_send(target, session, payload),
            Action::Relay { session, reverse, hop, msg, index, frame } => {
                self.relay(session, reverse, hop, msg, index, frame)
            }
            Action::Delivered { session, owner } => self.on_delivered(target, session, owner),
            Action::Teardown { session } => self.teardown_now(session),
        }
    }

    pub(crate) fn open_session(&mut self, caller: Qid, callee: Qid) -> Result<SessionId, SimError> {
        let caller_node = self
            .net
            .user_by_qid(caller)
            .ok_or(ProtocolError::CallerUnknown(caller))?;
        if caller == callee {
            return Err(ProtocolError::SelfCall(caller).into());
        }
        let user = self.net.user(caller_node)?;
        let owner = user.home_qbs;
        let access = user.access_circuit;
        let id = self.allocate_session();
        let mut record = SessionRecord::new(id, caller, callee, owner, self.now());
        record.circuits.extend(access);
        self.net.insert_session(record)?;
        self.net.user_mut(caller_node)?.active_sessions.insert(id);
        self.after(0, owner, Action::SessionRequest { session: id })?;
        Ok(id)
    }

    fn on_start(&mut self, caller_node: NodeId, callee: Qid, payload: Vec<u8>) -> Result<(), SimError> {
        let caller = self.net.user(caller_node)?.qid;
        let id = self.open_session(caller, callee)?;
        self.net.session_mut(id)?.close_after_delivery = true;
        self.net.user_mut(caller_node)?.outbox.insert(id, payload);
        Ok(())
    }

    fn on_session_request(&mut self, owner: NodeId, session: SessionId) -> Result<(), SimError> {
        let rec = self.net.session_mut(session)?;
        rec.transition(SessionState::LookingUpLocal)?;
        let (caller, callee) = (rec.caller, rec.callee);
        self.emit(
            owner,
            RecordType::SessionRequest,
            Some(session),
            json!({"caller": caller.0, "callee": callee.0}),
        );
        match self.net.lookup_local(owner, callee) {
            LocalLookup::Found(callee_node) => {
                let name = self.net.name(callee_node).to_string();
                self.emit(
                    owner,
                    RecordType::LookupLocalHit,
                    Some(session),
                    json!({"qid": callee.0, "node": name}),
                );
                let caller_node = self.net.user_by_qid(caller).ok_or(ProtocolError::CallerUnknown(caller))?;
                self.net.session_mut(session)?.path = vec![caller_node, owner];
                self.enter_negotiation(owner, session, owner)?;
                self.after(
                    STATION_TICKS,
                    callee_node,
                    Action::Negotiate { session, caller, via: owner },
                )?;
            }
            LocalLookup::NotFound => {
                self.emit(owner, RecordType::LookupLocalMiss, Some(session), json!({"qid": callee.0}));
                self.net.session_mut(session)?.transition(SessionState::QueryingMother)?;
                let mother = self.net.qbs(owner)?.mother().ok_or(ProtocolError::NotAChild(owner))?;
                self.after(
                    STATION_TICKS,
                    mother,
                    Action::MotherQuery { session, origin: owner, callee },
                )?;
            }
        }
        Ok(())
    }

    /// Moves the session to `Negotiating` and arms its timeout. `via` is the
    /// station that will talk to the callee.
    fn enter_negotiation(&mut self, owner: NodeId, session: SessionId, via: NodeId) -> Result<(), SimError> {
        let rec = self.net.session_mut(session)?;
        rec.transition(SessionState::Negotiating)?;
        let callee = rec.callee;
        let via = self.net.name(via).to_string();
        self.emit(owner, RecordType::Negotiate, Some(session), json!({"callee": callee.0, "via": via}));
        // answers arriving up to `negotiation_timeout` ticks later still count
        let deadline = self.now() + self.config.negotiation_timeout + 1;
        let seq = self.at(deadline, owner, Action::NegotiationTimeout { session })?;
        self.net.session_mut(session)?.timeout = Some(seq);
        Ok(())
    }

    fn on_mother_query(
        &mut self,
        mother: NodeId,
        session: SessionId,
        origin: NodeId,
        callee: Qid,
    ) -> Result<(), SimError> {
        let entry = self.net.qbs(mother)?.registry.get(callee);
        match entry {
            Some(Location::ChildQbs(child)) => {
                let name = self.net.name(child).to_string();
                self.emit(
                    mother,
                    RecordType::MotherLookup,
                    Some(session),
                    json!({"qid": callee.0, "child": name}),
                );
                self.broker(mother, session, origin, child)?;
            }
            Some(Location::RemotePlanet(peer)) => {
                let name = self.net.name(peer).to_string();
                self.emit(
                    mother,
                    RecordType::MotherLookup,
                    Some(session),
                    json!({"qid": callee.0, "remote_mother": name}),
                );
                self.after(
                    STATION_TICKS,
                    peer,
                    Action::PeerQuery { session, origin, home: mother, callee },
                )?;
            }
            _ => {
                self.emit(mother, RecordType::MotherLookup, Some(session), json!({"qid": callee.0}));
                self.emit(mother, RecordType::MotherLookupMiss, Some(session), json!({"qid": callee.0}));
                self.after(STATION_TICKS, origin, Action::MotherReply { session, remote: None })?;
            }
        }
        Ok(())
    }

    fn on_peer_query(
        &mut self,
        peer: NodeId,
        session: SessionId,
        origin: NodeId,
        home: NodeId,
        callee: Qid,
    ) -> Result<(), SimError> {
        let child = match self.net.qbs(peer)?.registry.get(callee) {
            Some(Location::ChildQbs(child)) => Some(child),
            _ => None,
        };
        match child {
            Some(c) => {
                let name = self.net.name(c).to_string();
                self.emit(
                    peer,
                    RecordType::MotherLookup,
                    Some(session),
                    json!({"qid": callee.0, "child": name}),
                );
            }
            None => {
                self.emit(peer, RecordType::MotherLookup, Some(session), json!({"qid": callee.0}));
                self.emit(peer, RecordType::MotherLookupMiss, Some(session), json!({"qid": callee.0}));
            }
        }
        self.after(STATION_TICKS, home, Action::PeerReply { session, origin, child })?;
        Ok(())
    }

    fn on_peer_reply(
        &mut self,
        home: NodeId,
        session: SessionId,
        origin: NodeId,
        child: Option<NodeId>,
    ) -> Result<(), SimError> {
        match child {
            Some(c) => self.broker(home, session, origin, c),
            None => {
                self.after(STATION_TICKS, origin, Action::MotherReply { session, remote: None })?;
                Ok(())
            }
        }
    }

    /// Provisions the session's child-child circuit and tells the origin.
    fn broker(&mut self, mother: NodeId, session: SessionId, origin: NodeId, child: NodeId) -> Result<(), SimError> {
        let circuit = self.net.provision_interqbs_circuit(mother, origin, child, session)?;
        let (a, b) = (self.net.name(origin).to_string(), self.net.name(child).to_string());
        self.emit(
            mother,
            RecordType::CircuitProvisioned,
            Some(session),
            json!({"circuit": circuit.0, "a": a, "b": b}),
        );
        self.after(
            STATION_TICKS,
            origin,
            Action::MotherReply { session, remote: Some((child, circuit)) },
        )?;
        Ok(())
    }

    fn on_mother_reply(
        &mut self,
        owner: NodeId,
        session: SessionId,
        remote: Option<(NodeId, CircuitId)>,
    ) -> Result<(), SimError> {
        let Some((child, circuit)) = remote else {
            return self.fail(session, FailureReason::NotFound, "not_found");
        };
        let rec = self.net.session_mut(session)?;
        let (caller, callee) = (rec.caller, rec.callee);
        rec.circuits.push(circuit);
        let caller_node = self.net.user_by_qid(caller).ok_or(ProtocolError::CallerUnknown(caller))?;
        self.net.session_mut(session)?.path = vec![caller_node, owner, child];
        self.enter_negotiation(owner, session, child)?;
        self.after(STATION_TICKS, child, Action::Handoff { session, caller, callee })?;
        Ok(())
    }

    fn on_handoff(&mut self, station: NodeId, session: SessionId, caller: Qid, callee: Qid) -> Result<(), SimError> {
        let rec = self.net.session(session)?;
        if rec.state().is_terminal() {
            // timed out while the handoff was in flight
            return Ok(());
        }
        let owner = rec.owner;
        match self.net.lookup_local(station, callee) {
            LocalLookup::Found(callee_node) => {
                let via = self.net.name(station).to_string();
                self.emit(station, RecordType::Negotiate, Some(session), json!({"callee": callee.0, "via": via}));
                self.after(
                    STATION_TICKS,
                    callee_node,
                    Action::Negotiate { session, caller, via: station },
                )?;
            }
            LocalLookup::NotFound => {
                // registries are updated atomically, so this only happens if
                // the topology was edited under a live session
                self.after(STATION_TICKS, owner, Action::Answer { session, owner, callee: None })?;
            }
        }
        Ok(())
    }

    fn on_negotiate(&mut self, callee_node: NodeId, session: SessionId, caller: Qid, via: NodeId) -> Result<(), SimError> {
        let user = self.net.user(callee_node)?;
        let decision = user.decide(caller);
        let owner = self.net.session(session)?.owner;
        let answer = match decision {
            Decision::Accept => {
                self.emit(callee_node, RecordType::Accept, Some(session), json!({"caller": caller.0}));
                self.net.user_mut(callee_node)?.active_sessions.insert(session);
                Some(callee_node)
            }
            Decision::Reject => {
                self.emit(callee_node, RecordType::Reject, Some(session), json!({"caller": caller.0}));
                None
            }
        };
        self.after(0, via, Action::Answer { session, owner, callee: answer })?;
        Ok(())
    }

    fn on_answer(
        &mut self,
        station: NodeId,
        session: SessionId,
        owner: NodeId,
        callee: Option<NodeId>,
    ) -> Result<(), SimError> {
        if station != owner {
            self.after(STATION_TICKS, owner, Action::Answer { session, owner, callee })?;
            return Ok(());
        }
        let rec = self.net.session_mut(session)?;
        if let Some(seq) = rec.timeout.take() {
            self.sched.cancel(seq);
        }
        let rec = self.net.session_mut(session)?;
        if rec.state() != SessionState::Negotiating {
            // late answer after a timeout
            if let Some(node) = callee {
                self.after(STATION_TICKS, node, Action::Closed { session })?;
            }
            return Ok(());
        }
        let Some(callee_node) = callee else {
            return self.fail(session, FailureReason::Rejected, "rejected");
        };
        let callee_access = self
            .net
            .user(callee_node)?
            .access_circuit
            .ok_or(ProtocolError::UnknownNode(callee_node))?;
        let now = self.now();
        let rec = self.net.session_mut(session)?;
        rec.path.push(callee_node);
        rec.circuits.push(callee_access);
        rec.callee_accepted = true;
        rec.transition(SessionState::Established)?;
        rec.established_at = Some(now);
        let caller_node = rec.path[0];
        let hops = rec.path.clone();
        let circuits: Vec<u64> = rec.circuits.iter().map(|c| c.0).collect();
        let path: Vec<String> = hops.iter().map(|n| self.net.name(*n).to_string()).collect();
        self.emit(
            owner,
            RecordType::Established,
            Some(session),
            json!({"path": path, "circuits": circuits}),
        );
        self.after(STATION_TICKS, caller_node, Action::Established { session })?;
        self.after(STATION_TICKS, callee_node, Action::Established { session })?;
        Ok(())
    }

    fn on_timeout(&mut self, session: SessionId) -> Result<(), SimError> {
        let rec = self.net.session_mut(session)?;
        rec.timeout = None;
        if rec.state() == SessionState::Negotiating {
            self.fail(session, FailureReason::Rejected, "timeout")?;
        }
        Ok(())
    }

    /// Releases every circuit the session holds, emitting one
    /// `CIRCUIT_RELEASED` per circuit. Session-scoped circuits leave the
    /// network; permanent ones stay.
    fn release_held(&mut self, session: SessionId) -> Result<(), SimError> {
        let rec = self.net.session_mut(session)?;
        let owner = rec.owner;
        let held = std::mem::take(&mut rec.circuits);
        for c in held {
            let permanent = self.net.circuit(c).is_none_or(|c| c.is_permanent());
            if !permanent {
                self.net.release_circuit(c)?;
            }
            self.emit(
                owner,
                RecordType::CircuitReleased,
                Some(session),
                json!({"circuit": c.0, "permanent": permanent}),
            );
        }
        Ok(())
    }

    fn fail(&mut self, session: SessionId, reason: FailureReason, cause: &str) -> Result<(), SimError> {
        self.release_held(session)?;
        let rec = self.net.session_mut(session)?;
        rec.transition(SessionState::Failed(reason))?;
        let owner = rec.owner;
        let caller = rec.caller;
        let callee_accepted = rec.callee_accepted;
        let callee = rec.callee;
        self.emit(
            owner,
            RecordType::Failed,
            Some(session),
            json!({"reason": reason, "cause": cause}),
        );
        if let Some(node) = self.net.user_by_qid(caller) {
            self.after(STATION_TICKS, node, Action::Closed { session })?;
        }
        if callee_accepted {
            if let Some(node) = self.net.user_by_qid(callee) {
                self.after(STATION_TICKS, node, Action::Closed { session })?;
            }
        }
        Ok(())
    }

    fn on_established_notice(&mut self, user: NodeId, session: SessionId) -> Result<(), SimError> {
        let pending = self.net.user_mut(user)?.outbox.remove(&session);
        if let Some(payload) = pending {
            self.on_send(user, session, payload)?;
        }
        Ok(())
    }

    fn on_closed_notice(&mut self, user: NodeId, session: SessionId) -> Result<(), SimError> {
        let u = self.net.user_mut(user)?;
        u.active_sessions.remove(&session);
        u.outbox.remove(&session);
        u.reassembly.remove(&session);
        Ok(())
    }

    fn on_send(&mut self, user: NodeId, session: SessionId, payload: Vec<u8>) -> Result<(), SimError> {
        let qid = self.net.user(user)?.qid;
        let rec = self.net.session_mut(session)?;
        if rec.state() != SessionState::Established || !rec.is_party(qid) {
            return Ok(());
        }
        let reverse = qid == rec.callee;
        let dir = usize::from(reverse);
        let msg = rec.sent[dir];
        rec.sent[dir] += 1;
        let peer = if reverse { rec.caller } else { rec.callee };
        let frames = segment_message(&payload);
        self.emit(
            user,
            RecordType::Send,
            Some(session),
            json!({"msg": msg, "to": peer.0, "bytes": payload.len(), "frames": frames.len()}),
        );
        for (index, frame) in frames.into_iter().enumerate() {
            self.relay(session, reverse, 0, msg, index, frame)?;
        }
        Ok(())
    }

    /// Moves one frame across hop `hop` of the session path (as seen from the
    /// sender). Frames for a session that is no longer established are dropped.
    fn relay(
        &mut self,
        session: SessionId,
        reverse: bool,
        hop: usize,
        msg: u64,
        index: usize,
        frame: Frame,
    ) -> Result<(), SimError> {
        let rec = self.net.session(session)?;
        if rec.state() != SessionState::Established {
            return Ok(());
        }
        let n = rec.path.len();
        let (from, to, circuit) = if reverse {
            (rec.path[n - 1 - hop], rec.path[n - 2 - hop], rec.circuits[n - 2 - hop])
        } else {
            (rec.path[hop], rec.path[hop + 1], rec.circuits[hop])
        };
        let last = hop + 2 == n;
        let owner = rec.owner;
        if hop == 0 {
            self.emit(
                from,
                RecordType::Data,
                Some(session),
                json!({"msg": msg, "frame": index, "hop": 0, "bits": frame.to_string()}),
            );
        }
        let received = self
            .net
            .circuit_mut(circuit)
            .ok_or(ProtocolError::UnknownCircuit(circuit))?
            .transmit(from, frame)
            .map_err(ProtocolError::from)?;
        self.emit(
            to,
            RecordType::Data,
            Some(session),
            json!({"msg": msg, "frame": index, "hop": hop + 1, "bits": received.to_string()}),
        );
        if !last {
            self.after(
                STATION_TICKS,
                to,
                Action::Relay { session, reverse, hop: hop + 1, msg, index, frame: received },
            )?;
            return Ok(());
        }
        let user = self.net.user_mut(to)?;
        let outcome = user
            .reassembly
            .entry(session)
            .or_insert_with(MessageBuffer::new)
            .push(received)
            .map_err(ProtocolError::from)?;
        if let Reassembly::Complete(bytes) = outcome {
            user.reassembly.remove(&session);
            let home = user.home_qbs;
            let now = self.now();
            let len = bytes.len();
            self.net.user_mut(to)?.deliver(now, session, bytes);
            self.net.session_mut(session)?.delivered[usize::from(reverse)] += 1;
            self.emit(to, RecordType::Deliver, Some(session), json!({"msg": msg, "bytes": len}));
            self.after(0, home, Action::Delivered { session, owner })?;
        }
        Ok(())
    }

    fn on_delivered(&mut self, station: NodeId, session: SessionId, owner: NodeId) -> Result<(), SimError> {
        if station != owner {
            self.after(STATION_TICKS, owner, Action::Delivered { session, owner })?;
            return Ok(());
        }
        let rec = self.net.session(session)?;
        if rec.close_after_delivery && rec.state() == SessionState::Established {
            self.teardown_now(session)?;
        }
        Ok(())
    }

    fn teardown_now(&mut self, session: SessionId) -> Result<(), SimError> {
        let rec = self.net.session_mut(session)?;
        if rec.state() != SessionState::Established {
            return Ok(());
        }
        rec.transition(SessionState::TearingDown)?;
        let owner = rec.owner;
        let ends = [rec.path[0], *rec.path.last().expect("established path")];
        self.emit(owner, RecordType::Teardown, Some(session), json!({}));
        self.release_held(session)?;
        self.net.session_mut(session)?.transition(SessionState::Closed)?;
        self.emit(owner, RecordType::Closed, Some(session), json!({}));
        for node in ends {
            if matches!(self.net.node(node)?, Node::User(_)) {
                self.after(STATION_TICKS, node, Action::Closed { session })?;
            }
        }
        Ok(())
    }
}
