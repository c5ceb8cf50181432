//! Windowed measurements reported by the simulator at step boundaries.

use std::io::{self, Write};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkTelemetry {
    /// Wire bytes whose transmission started in the window.
    pub bytes_tx: u64,
    /// Packets dropped at this link's queue, or expiring after crossing it.
    pub pkts_dropped: u64,
    /// Queue occupancy over buffer size at the sampling instant.
    pub queue_fill: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Telemetry {
    /// Indexed like `Topology::links`.
    pub links: Vec<LinkTelemetry>,
    /// Unique payload bytes delivered to applications at each node.
    pub delivered: Vec<u64>,
    /// Payload bytes injected by all sources (retransmissions included).
    pub injected_bytes: u64,
}

impl Telemetry {
    pub fn zeros(num_nodes: usize, num_links: usize) -> Self {
        Self {
            links: vec![LinkTelemetry::default(); num_links],
            delivered: vec![0; num_nodes],
            injected_bytes: 0,
        }
    }

    /// Writes `step,link,bytes_tx,drops,queue_fill` rows, one per link.
    pub fn write_trace_rows(&self, step: usize, out: &mut impl Write) -> io::Result<()> {
        for (i, l) in self.links.iter().enumerate() {
            writeln!(out, "{step},{i},{},{},{}", l.bytes_tx, l.pkts_dropped, l.queue_fill)?;
        }
        Ok(())
    }
}

pub const TRACE_HEADER: &str = "step,link,bytes_tx,drops,queue_fill";

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReward {
    /// Megabytes of unique payload delivered during the step.
    pub goodput_mb: f64,
}

/// Episode-level counters and the metrics derived from them.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeStats {
    pub goodput_mb: f64,
    /// Mean end-to-end latency of delivered data packets; 0 if none.
    pub avg_delay_ms: f64,
    /// Dropped over injected payload, percent; 0 if nothing was injected.
    pub drop_pct: f64,
    pub delivered_packets: u64,
    pub injected_bytes: u64,
    pub delivered_bytes: u64,
    pub dropped_bytes: u64,
    pub in_flight_bytes: u64,
}

impl EpisodeStats {
    /// `injected == delivered + dropped + in_flight`.
    pub fn is_conserved(&self) -> bool {
        self.injected_bytes == self.delivered_bytes + self.dropped_bytes + self.in_flight_bytes
    }
}
