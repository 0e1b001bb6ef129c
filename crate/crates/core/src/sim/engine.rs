use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::protocol::Action;
use super::scheduler::{PastTick, Scheduler};
use super::topology::Topology;
use super::trace::{RecordType, Trace, TraceRecord};
use crate::network::Network;
use crate::qbs::{FailureReason, ProtocolError, Qid, SessionId, SessionRecord, SessionState};
use crate::NodeId;

pub const DEFAULT_NEGOTIATION_TIMEOUT: u64 = 100;
pub const DEFAULT_TICK_BUDGET: u64 = 1_000_000;
pub const DEFAULT_MAX_PAYLOAD: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub seed: u64,
    /// Ticks a callee has to answer a negotiation before the session fails
    /// as rejected.
    pub negotiation_timeout: u64,
    /// Maximum number of events executed at any single tick.
    pub tick_budget: u64,
    pub max_payload_bytes: usize,
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        SimConfig {
            seed,
            ..Self::default()
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            negotiation_timeout: DEFAULT_NEGOTIATION_TIMEOUT,
            tick_budget: DEFAULT_TICK_BUDGET,
            max_payload_bytes: DEFAULT_MAX_PAYLOAD,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("tick {tick} exceeded the per-tick event budget of {budget}")]
    TickBudgetExceeded { tick: u64, budget: u64 },
    #[error("event scheduled at tick {} while the clock is at {}", .0.requested, .0.now)]
    ScheduleInPast(PastTick),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl From<PastTick> for SimError {
    fn from(p: PastTick) -> Self {
        SimError::ScheduleInPast(p)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SessionStats {
    pub requested: u64,
    pub established: u64,
    pub closed: u64,
    pub failed: u64,
    pub failed_not_found: u64,
    pub failed_rejected: u64,
    pub open: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub final_tick: u64,
    pub records: BTreeMap<String, u64>,
    pub sessions: SessionStats,
}

/// One simulation run: network state, event queue and trace.
pub struct Simulation {
    pub(crate) net: Network,
    pub(crate) sched: Scheduler<Action>,
    pub(crate) trace: Trace,
    pub(crate) config: SimConfig,
    pub(crate) topology: Topology,
    next_session: u64,
    events_at_tick: u64,
    final_tick: u64,
}

impl Simulation {
    pub fn new(net: Network, config: SimConfig) -> Self {
        Simulation {
            net,
            sched: Scheduler::new(),
            trace: Trace::new(),
            config,
            topology: Topology::default(),
            next_session: 1,
            events_at_tick: 0,
            final_tick: 0,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn now(&self) -> u64 {
        self.sched.now()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.records()
    }

    pub fn trace_ndjson(&self) -> String {
        self.trace.to_ndjson()
    }

    pub fn write_trace<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        self.trace.write_ndjson(out)
    }

    pub fn session(&self, id: SessionId) -> Result<&SessionRecord, ProtocolError> {
        self.net.session(id)
    }

    /// Processes events in `(tick, seq)` order until the queue is empty and
    /// returns the tick of the last event executed (0 if none ran).
    pub fn run_until_idle(&mut self) -> Result<u64, SimError> {
        while let Some(ev) = self.sched.pop() {
            if ev.tick != self.final_tick {
                self.final_tick = ev.tick;
                self.events_at_tick = 0;
            }
            self.events_at_tick += 1;
            if self.events_at_tick > self.config.tick_budget {
                return Err(SimError::TickBudgetExceeded {
                    tick: ev.tick,
                    budget: self.config.tick_budget,
                });
            }
            self.dispatch(ev.target, ev.action)?;
        }
        Ok(self.final_tick)
    }

    /// Schedules at the current tick plus `delay`.
    pub(crate) fn after(&mut self, delay: u64, target: NodeId, action: Action) -> Result<u64, SimError> {
        Ok(self.sched.schedule(self.now() + delay, target, action)?)
    }

    pub(crate) fn at(&mut self, tick: u64, target: NodeId, action: Action) -> Result<u64, SimError> {
        Ok(self.sched.schedule(tick, target, action)?)
    }

    pub(crate) fn emit(
        &mut self,
        node: NodeId,
        record_type: RecordType,
        session: Option<SessionId>,
        detail: serde_json::Value,
    ) {
        let now = self.now();
        let name = self.net.name(node).to_string();
        self.trace.emit(now, &name, record_type, session, detail);
    }

    pub(crate) fn allocate_session(&mut self) -> SessionId {
        let id = SessionId(self.next_session);
        self.next_session += 1;
        id
    }

    /// Asks the caller's home station to open a session to `callee`.
    ///
    /// The id is returned at once; progress shows up in the trace as the
    /// simulation runs.
    pub fn request_session(&mut self, caller: Qid, callee: Qid) -> Result<SessionId, ProtocolError> {
        self.open_session(caller, callee).map_err(|e| match e {
            SimError::Protocol(p) => p,
            other => unreachable!("opening a session only schedules at the current tick: {other}"),
        })
    }

    /// Queues `payload` for transmission from `sender` over an established
    /// session.
    pub fn send_message(&mut self, sender: Qid, session: SessionId, payload: Vec<u8>) -> Result<(), ProtocolError> {
        let rec = self.net.session(session)?;
        if !rec.is_party(sender) {
            return Err(ProtocolError::NotAParty { session, qid: sender });
        }
        if rec.state() != SessionState::Established {
            return Err(ProtocolError::SessionNotEstablished(session));
        }
        let node = self
            .net
            .user_by_qid(sender)
            .ok_or(ProtocolError::CallerUnknown(sender))?;
        self.sched
            .schedule(self.now(), node, Action::SendMessage { session, payload })
            .expect("current tick is never in the past");
        Ok(())
    }

    /// Requests teardown at the owning station. A no-op on sessions that are
    /// already closed or failed.
    pub fn teardown_session(&mut self, session: SessionId) -> Result<(), ProtocolError> {
        let rec = self.net.session(session)?;
        match rec.state() {
            SessionState::Closed | SessionState::Failed(_) => Ok(()),
            SessionState::Established => {
                let owner = rec.owner;
                self.sched
                    .schedule(self.now(), owner, Action::Teardown { session })
                    .expect("current tick is never in the past");
                Ok(())
            }
            _ => Err(ProtocolError::SessionNotEstablished(session)),
        }
    }

    /// Drains the completed messages of the user holding `qid`.
    pub fn receive_poll(&mut self, qid: Qid) -> Result<Vec<(SessionId, Vec<u8>)>, ProtocolError> {
        let node = self.net.user_by_qid(qid).ok_or(ProtocolError::CallerUnknown(qid))?;
        Ok(self.net.user_mut(node)?.receive_poll())
    }

    pub fn stats(&self) -> Stats {
        let mut records: BTreeMap<String, u64> = BTreeMap::new();
        for r in self.trace.records() {
            *records.entry(r.record_type.as_str().to_string()).or_default() += 1;
        }
        let mut sessions = SessionStats::default();
        for s in self.net.sessions() {
            sessions.requested += 1;
            if s.established_at.is_some() {
                sessions.established += 1;
            }
            match s.state() {
                SessionState::Closed => sessions.closed += 1,
                SessionState::Failed(reason) => {
                    sessions.failed += 1;
                    match reason {
                        FailureReason::NotFound => sessions.failed_not_found += 1,
                        FailureReason::Rejected => sessions.failed_rejected += 1,
                    }
                }
                _ => sessions.open += 1,
            }
        }
        Stats {
            final_tick: self.final_tick,
            records,
            sessions,
        }
    }
}
