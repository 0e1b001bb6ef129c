//! Discrete-event engine, trace output, topology construction and latency
//! accounting.

mod engine;
mod latency;
mod protocol;
pub mod scheduler;
mod topology;
pub mod trace;

pub use engine::{
    SessionStats, SimConfig, SimError, Simulation, Stats, DEFAULT_MAX_PAYLOAD,
    DEFAULT_NEGOTIATION_TIMEOUT, DEFAULT_TICK_BUDGET,
};
pub use latency::{HopLatency, LatencyReport, SPEED_OF_LIGHT};
pub use protocol::STATION_TICKS;
pub use topology::{build_topology, Link, Planet, Topology};
pub use trace::{parse_ndjson, RecordType, Trace, TraceRecord};
