//! Packet-level network simulator.
//!
//! Time advances in 0.1 ms ticks. Within a tick the simulator processes, in
//! order: link arrivals (by link id, FIFO), link transmissions (by link id),
//! retransmit timers, then sources (by flow id). Packet timestamps are kept
//! in nanoseconds, so serialization and propagation are exact even though
//! processing is batched per tick. Queues are drop-tail with a capacity in
//! packets; the packet being serialized no longer occupies the queue.

mod telemetry;
pub mod transport;

use std::collections::VecDeque;

use thiserror::Error;

pub use telemetry::{EpisodeStats, LinkTelemetry, StepReward, Telemetry, TRACE_HEADER};
use transport::{TcpSender, UdpSender};

use crate::tables::{RoutingTables, TableError};
use crate::topology::{NodeId, Topology};
use crate::traffic::{FlowSpec, Protocol, TrafficSequence};

pub const TICK_NS: u64 = 100_000;
pub const MTU_BYTES: u32 = 1500;
pub const HEADER_BYTES: u32 = 40;
pub const MSS_BYTES: u32 = MTU_BYTES - HEADER_BYTES;
pub const ACK_BYTES: u32 = 64;
pub const INITIAL_TTL: u8 = 32;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Tables(#[from] TableError),
    #[error("no routing tables installed")]
    NoTables,
    #[error("step duration {0} ms is not a positive multiple of the 0.1 ms tick")]
    BadDuration(f64),
}

pub fn ms_to_ticks(ms: f64) -> Option<u64> {
    let ticks = ms * 1e6 / TICK_NS as f64;
    let rounded = ticks.round();
    if ms > 0.0 && rounded >= 1.0 && (ticks - rounded).abs() < 1e-6 {
        Some(rounded as u64)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Data,
    Ack,
}

#[derive(Debug, Clone)]
struct Packet {
    flow: u32,
    seq: u32,
    dst: NodeId,
    kind: Kind,
    payload: u32,
    wire: u32,
    ttl: u8,
    /// Transmission time at the source; echoed back by ACKs.
    created_ns: u64,
    /// Earliest time the packet may start serializing on its current link.
    ready_ns: u64,
}

#[derive(Debug, Clone)]
struct LinkState {
    next: NodeId,
    buffer: usize,
    rate_mbps: f64,
    prop_ns: u64,
    queue: VecDeque<Packet>,
    pipe: VecDeque<(u64, Packet)>,
    busy_until: u64,
}

impl LinkState {
    fn ser_ns(&self, wire: u32) -> u64 {
        (wire as f64 * 8.0 * 1000.0 / self.rate_mbps).round() as u64
    }
}

#[derive(Debug, Clone)]
enum Sender {
    Tcp(TcpSender),
    Udp(UdpSender),
}

#[derive(Debug, Clone)]
struct FlowState {
    spec: FlowSpec,
    segments: u32,
    sender: Sender,
    received: Vec<bool>,
}

impl FlowState {
    fn new(spec: FlowSpec) -> Self {
        let segments = spec.size.div_ceil(MSS_BYTES as u64) as u32;
        let sender = match spec.protocol {
            Protocol::Tcp => Sender::Tcp(TcpSender::new(segments)),
            Protocol::Udp => {
                let first = payload_of(&spec, 0) + HEADER_BYTES;
                Sender::Udp(UdpSender::new(segments, spec.udp_rate, TICK_NS, first as f64 * 8.0))
            }
        };
        Self { received: vec![false; segments as usize], spec, segments, sender }
    }

    fn is_done(&self) -> bool {
        match &self.sender {
            Sender::Tcp(t) => t.is_done(),
            Sender::Udp(u) => u.is_done(),
        }
    }
}

fn payload_of(spec: &FlowSpec, seq: u32) -> u32 {
    let offset = seq as u64 * MSS_BYTES as u64;
    (spec.size - offset).min(MSS_BYTES as u64) as u32
}

#[derive(Debug, Clone, Default)]
struct Window {
    bytes_tx: Vec<u64>,
    drops: Vec<u64>,
    delivered: Vec<u64>,
    injected: u64,
    goodput_bytes: u64,
}

#[derive(Debug, Clone, Default)]
struct Totals {
    injected: u64,
    delivered: u64,
    dropped: u64,
    goodput: u64,
    delivered_packets: u64,
    delay_sum_ns: u128,
}

/// Single-writer simulation of one episode.
#[derive(Debug, Clone)]
pub struct Simulator {
    topo: Topology,
    tables: Option<RoutingTables>,
    links: Vec<LinkState>,
    flows: Vec<FlowState>,
    next_flow: usize,
    active: Vec<usize>,
    clock: u64,
    window: Window,
    totals: Totals,
}

impl Simulator {
    pub fn new(topo: &Topology, traffic: &TrafficSequence) -> Self {
        let links = topo
            .links()
            .iter()
            .map(|l| LinkState {
                next: l.dst,
                buffer: l.buffer as usize,
                rate_mbps: l.data_rate,
                prop_ns: (l.prop_delay * 1e6).round() as u64,
                queue: VecDeque::new(),
                pipe: VecDeque::new(),
                busy_until: 0,
            })
            .collect();
        let mut flows: Vec<FlowState> = traffic.flows.iter().cloned().map(FlowState::new).collect();
        flows.sort_by(|a, b| a.spec.start.total_cmp(&b.spec.start).then(a.spec.id.cmp(&b.spec.id)));
        let window = Window {
            bytes_tx: vec![0; topo.num_links()],
            drops: vec![0; topo.num_links()],
            delivered: vec![0; topo.num_nodes()],
            ..Default::default()
        };
        Self {
            topo: topo.clone(),
            tables: None,
            links,
            flows,
            next_flow: 0,
            active: Vec::new(),
            clock: 0,
            window,
            totals: Totals::default(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    /// Clock in ticks.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn tables(&self) -> Option<&RoutingTables> {
        self.tables.as_ref()
    }

    /// Replaces the forwarding tables. Packets already serializing or
    /// propagating are unaffected; every later forwarding decision uses the
    /// new tables.
    pub fn install_routing(&mut self, tables: RoutingTables) -> Result<(), SimError> {
        tables.validate(&self.topo)?;
        self.tables = Some(tables);
        Ok(())
    }

    /// Advances the clock by `duration_ms` and returns the telemetry and
    /// goodput of that window.
    pub fn simulate_step(&mut self, duration_ms: f64) -> Result<(Telemetry, StepReward), SimError> {
        let ticks = ms_to_ticks(duration_ms).ok_or(SimError::BadDuration(duration_ms))?;
        if self.tables.is_none() {
            return Err(SimError::NoTables);
        }
        for _ in 0..ticks {
            self.tick();
        }
        let reward = StepReward { goodput_mb: self.window.goodput_bytes as f64 / 1e6 };
        Ok((self.collect_telemetry(), reward))
    }

    /// Returns the counters accumulated since the previous call and resets
    /// them. `queue_fill` is sampled at call time.
    pub fn collect_telemetry(&mut self) -> Telemetry {
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| LinkTelemetry {
                bytes_tx: self.window.bytes_tx[i],
                pkts_dropped: self.window.drops[i],
                queue_fill: l.queue.len() as f64 / l.buffer as f64,
            })
            .collect();
        let tel = Telemetry {
            links,
            delivered: self.window.delivered.clone(),
            injected_bytes: self.window.injected,
        };
        self.window.bytes_tx.fill(0);
        self.window.drops.fill(0);
        self.window.delivered.fill(0);
        self.window.injected = 0;
        self.window.goodput_bytes = 0;
        tel
    }

    /// Payload bytes of data packets currently queued or on the wire.
    pub fn in_flight_bytes(&self) -> u64 {
        self.links
            .iter()
            .map(|l| {
                let q: u64 = l.queue.iter().map(|p| p.payload as u64).sum();
                let w: u64 = l.pipe.iter().map(|(_, p)| p.payload as u64).sum();
                q + w
            })
            .sum()
    }

    pub fn stats(&self) -> EpisodeStats {
        let t = &self.totals;
        EpisodeStats {
            goodput_mb: t.goodput as f64 / 1e6,
            avg_delay_ms: if t.delivered_packets == 0 {
                0.0
            } else {
                t.delay_sum_ns as f64 / t.delivered_packets as f64 / 1e6
            },
            drop_pct: if t.injected == 0 {
                0.0
            } else {
                t.dropped as f64 / t.injected as f64 * 100.0
            },
            delivered_packets: t.delivered_packets,
            injected_bytes: t.injected,
            delivered_bytes: t.delivered,
            dropped_bytes: t.dropped,
            in_flight_bytes: self.in_flight_bytes(),
        }
    }

    /// Longest egress queue, in packets, relative to its buffer.
    pub fn max_queue_fill(&self) -> f64 {
        self.links
            .iter()
            .map(|l| l.queue.len() as f64 / l.buffer as f64)
            .fold(0.0, f64::max)
    }

    fn tick(&mut self) {
        let t0 = self.clock * TICK_NS;
        let t1 = t0 + TICK_NS;

        for li in 0..self.links.len() {
            while self.links[li].pipe.front().is_some_and(|(at, _)| *at < t1) {
                let (at, pkt) = self.links[li].pipe.pop_front().expect("checked front");
                let node = self.links[li].next;
                self.arrive(li, node, pkt, at);
            }
        }

        for (li, link) in self.links.iter_mut().enumerate() {
            while let Some(p) = link.queue.front() {
                let start = link.busy_until.max(p.ready_ns);
                if start >= t1 {
                    break;
                }
                let pkt = link.queue.pop_front().expect("checked front");
                link.busy_until = start + link.ser_ns(pkt.wire);
                self.window.bytes_tx[li] += pkt.wire as u64;
                link.pipe.push_back((link.busy_until + link.prop_ns, pkt));
            }
        }

        while self.next_flow < self.flows.len()
            && self.flows[self.next_flow].spec.start * 1e6 < t1 as f64
        {
            self.active.push(self.next_flow);
            self.next_flow += 1;
        }

        let active = std::mem::take(&mut self.active);
        for &fi in &active {
            let mut sends = Vec::new();
            let flow = &mut self.flows[fi];
            match &mut flow.sender {
                Sender::Tcp(tcp) => {
                    tcp.check_timeout(t0);
                    while let Some(seq) = tcp.poll_send(t0) {
                        sends.push(seq);
                    }
                }
                Sender::Udp(udp) => {
                    udp.accrue();
                    loop {
                        let seq = udp.next_seq();
                        if seq >= flow.segments {
                            break;
                        }
                        let wire = (payload_of(&flow.spec, seq) + HEADER_BYTES) as f64 * 8.0;
                        match udp.poll_send(wire) {
                            Some(s) => sends.push(s),
                            None => break,
                        }
                    }
                }
            }
            for seq in sends {
                let spec = &self.flows[fi].spec;
                let payload = payload_of(spec, seq);
                let pkt = Packet {
                    flow: fi as u32,
                    seq,
                    dst: spec.dst,
                    kind: Kind::Data,
                    payload,
                    wire: payload + HEADER_BYTES,
                    ttl: INITIAL_TTL,
                    created_ns: t0,
                    ready_ns: t0,
                };
                let src = spec.src;
                self.totals.injected += payload as u64;
                self.window.injected += payload as u64;
                self.forward(src, pkt);
            }
        }
        self.active = active;
        self.active.retain(|&fi| !self.flows[fi].is_done());

        self.clock += 1;
    }

    fn arrive(&mut self, link: usize, node: NodeId, mut pkt: Packet, at: u64) {
        if pkt.dst == node {
            self.deliver(node, pkt, at);
            return;
        }
        pkt.ttl -= 1;
        if pkt.ttl == 0 {
            self.drop_packet(link, &pkt);
            return;
        }
        pkt.ready_ns = at;
        self.forward(node, pkt);
    }

    fn forward(&mut self, node: NodeId, pkt: Packet) {
        let tables = self.tables.as_ref().expect("tables installed before stepping");
        let next = tables.get(node, pkt.dst).expect("validated tables are total");
        let li = self.topo.link_between(node, next).expect("validated next hop is a neighbor");
        let link = &mut self.links[li];
        if link.queue.len() >= link.buffer {
            self.drop_packet(li, &pkt);
        } else {
            link.queue.push_back(pkt);
        }
    }

    fn drop_packet(&mut self, link: usize, pkt: &Packet) {
        self.window.drops[link] += 1;
        self.totals.dropped += pkt.payload as u64;
    }

    fn deliver(&mut self, node: NodeId, pkt: Packet, at: u64) {
        let flow = &mut self.flows[pkt.flow as usize];
        match pkt.kind {
            Kind::Ack => {
                if let Sender::Tcp(tcp) = &mut flow.sender {
                    tcp.on_ack(pkt.seq, pkt.created_ns, at);
                }
            }
            Kind::Data => {
                self.totals.delivered += pkt.payload as u64;
                self.totals.delivered_packets += 1;
                self.totals.delay_sum_ns += (at - pkt.created_ns) as u128;
                if !flow.received[pkt.seq as usize] {
                    flow.received[pkt.seq as usize] = true;
                    self.totals.goodput += pkt.payload as u64;
                    self.window.goodput_bytes += pkt.payload as u64;
                    self.window.delivered[node] += pkt.payload as u64;
                }
                if flow.spec.protocol == Protocol::Tcp {
                    let ack = Packet {
                        flow: pkt.flow,
                        seq: pkt.seq,
                        dst: flow.spec.src,
                        kind: Kind::Ack,
                        payload: 0,
                        wire: ACK_BYTES,
                        ttl: INITIAL_TTL,
                        created_ns: pkt.created_ns,
                        ready_ns: at,
                    };
                    self.forward(node, ack);
                }
            }
        }
    }
}
