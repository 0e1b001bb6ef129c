//! Trace records and their newline-delimited JSON form.
//!
//! Each line is one object with keys in the order
//! `tick, seq, node, type, session, detail`. `seq` numbers the records of a
//! tick from zero. Detail keys are sorted.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::qbs::SessionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordType {
    SessionRequest,
    LookupLocalHit,
    LookupLocalMiss,
    MotherLookup,
    MotherLookupMiss,
    Negotiate,
    Accept,
    Reject,
    Established,
    CircuitProvisioned,
    Data,
    Teardown,
    CircuitReleased,
    Closed,
    Failed,
    Send,
    Deliver,
}

impl RecordType {
    pub const ALL: [RecordType; 17] = [
        RecordType::SessionRequest,
        RecordType::LookupLocalHit,
        RecordType::LookupLocalMiss,
        RecordType::MotherLookup,
        RecordType::MotherLookupMiss,
        RecordType::Negotiate,
        RecordType::Accept,
        RecordType::Reject,
        RecordType::Established,
        RecordType::CircuitProvisioned,
        RecordType::Data,
        RecordType::Teardown,
        RecordType::CircuitReleased,
        RecordType::Closed,
        RecordType::Failed,
        RecordType::Send,
        RecordType::Deliver,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordType::SessionRequest => "SESSION_REQUEST",
            RecordType::LookupLocalHit => "LOOKUP_LOCAL_HIT",
            RecordType::LookupLocalMiss => "LOOKUP_LOCAL_MISS",
            RecordType::MotherLookup => "MOTHER_LOOKUP",
            RecordType::MotherLookupMiss => "MOTHER_LOOKUP_MISS",
            RecordType::Negotiate => "NEGOTIATE",
            RecordType::Accept => "ACCEPT",
            RecordType::Reject => "REJECT",
            RecordType::Established => "ESTABLISHED",
            RecordType::CircuitProvisioned => "CIRCUIT_PROVISIONED",
            RecordType::Data => "DATA",
            RecordType::Teardown => "TEARDOWN",
            RecordType::CircuitReleased => "CIRCUIT_RELEASED",
            RecordType::Closed => "CLOSED",
            RecordType::Failed => "FAILED",
            RecordType::Send => "SEND",
            RecordType::Deliver => "DELIVER",
        }
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub seq: u64,
    pub node: String,
    #[serde(rename = "type")]
    pub record_type: RecordType,
    pub session: Option<u64>,
    pub detail: Map<String, Value>,
}

impl TraceRecord {
    pub fn detail_u64(&self, key: &str) -> Option<u64> {
        self.detail.get(key).and_then(Value::as_u64)
    }

    pub fn detail_str(&self, key: &str) -> Option<&str> {
        self.detail.get(key).and_then(Value::as_str)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
    tick: u64,
    next_seq: u64,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emit(
        &mut self,
        tick: u64,
        node: &str,
        record_type: RecordType,
        session: Option<SessionId>,
        detail: Value,
    ) {
        if tick != self.tick {
            self.tick = tick;
            self.next_seq = 0;
        }
        let detail = match detail {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        self.records.push(TraceRecord {
            tick,
            seq: self.next_seq,
            node: node.to_string(),
            record_type,
            session: session.map(|s| s.0),
            detail,
        });
        self.next_seq += 1;
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

/// Parses newline-delimited trace output back into records.
pub fn parse_ndjson(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
