//! Latency accounting: entangled delivery against a light-speed baseline.

use serde::Serialize;

use super::engine::Simulation;
use crate::qbs::{ProtocolError, SessionId};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopLatency {
    pub from: String,
    pub to: String,
    pub entangled_channel_ticks: u64,
    pub distance_meters: f64,
    pub classical_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub session_id: SessionId,
    pub hops: Vec<HopLatency>,
    /// Sum of the per-hop channel delays, which are always zero.
    pub entangled_channel_ticks: u64,
    /// One tick per relaying station on the path.
    pub processing_ticks: u64,
    /// Time light would need along the conventional route of every hop.
    pub classical_baseline_seconds: f64,
}

impl Simulation {
    pub fn latency_report(&self, session: SessionId) -> Result<LatencyReport, ProtocolError> {
        let rec = self.net.session(session)?;
        if rec.established_at.is_none() {
            return Err(ProtocolError::SessionNotEstablished(session));
        }
        let hops: Vec<HopLatency> = rec
            .path
            .windows(2)
            .map(|w| {
                let d = self.net.classical_distance(w[0], w[1]);
                HopLatency {
                    from: self.net.name(w[0]).to_string(),
                    to: self.net.name(w[1]).to_string(),
                    entangled_channel_ticks: 0,
                    distance_meters: d,
                    classical_seconds: d / SPEED_OF_LIGHT,
                }
            })
            .collect();
        let distance: f64 = hops.iter().map(|h| h.distance_meters).sum();
        Ok(LatencyReport {
            session_id: session,
            entangled_channel_ticks: hops.iter().map(|h| h.entangled_channel_ticks).sum(),
            processing_ticks: rec.path.len().saturating_sub(2) as u64,
            classical_baseline_seconds: distance / SPEED_OF_LIGHT,
            hops,
        })
    }
}
