//! Sender-side transport state: a small AIMD TCP and a paced UDP source.

use std::collections::{BTreeMap, VecDeque};

pub const INITIAL_CWND: f64 = 2.0;
pub const INITIAL_SSTHRESH: f64 = 32.0;
pub const MIN_CWND: f64 = 1.0;
pub const MAX_CWND: f64 = 1024.0;
/// Retransmit timeout floor, ns.
pub const MIN_RTO_NS: u64 = 4_000_000;
/// Timeout used before the first RTT sample, ns.
pub const INITIAL_RTO_NS: u64 = 10_000_000;

/// Simplified NewReno: slow start to `ssthresh`, then +1/cwnd per ACK, and a
/// halving on retransmit timeout at most once per loss episode. Segments are
/// acknowledged individually and there are no duplicate-ACK heuristics.
#[derive(Debug, Clone)]
pub struct TcpSender {
    segments: u32,
    cwnd: f64,
    ssthresh: f64,
    next_seq: u32,
    // seq -> time of the most recent transmission
    unacked: BTreeMap<u32, u64>,
    // (sent_ns, seq) in transmission order; stale entries are skipped lazily
    send_log: VecDeque<(u64, u32)>,
    retransmit: VecDeque<u32>,
    acked: Vec<bool>,
    acked_count: u32,
    srtt_ns: Option<f64>,
    last_reduction_ns: Option<u64>,
}

impl TcpSender {
    pub fn new(segments: u32) -> Self {
        Self {
            segments,
            cwnd: INITIAL_CWND,
            ssthresh: INITIAL_SSTHRESH,
            next_seq: 0,
            unacked: BTreeMap::new(),
            send_log: VecDeque::new(),
            retransmit: VecDeque::new(),
            acked: vec![false; segments as usize],
            acked_count: 0,
            srtt_ns: None,
            last_reduction_ns: None,
        }
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn in_flight(&self) -> usize {
        self.unacked.len()
    }

    pub fn is_done(&self) -> bool {
        self.acked_count == self.segments
    }

    pub fn rto_ns(&self) -> u64 {
        match self.srtt_ns {
            Some(srtt) => ((2.0 * srtt).round() as u64).max(MIN_RTO_NS),
            None => INITIAL_RTO_NS,
        }
    }

    /// Next segment the window allows to send at `now`, if any.
    pub fn poll_send(&mut self, now: u64) -> Option<u32> {
        if self.unacked.len() >= (self.cwnd.floor() as usize).max(1) {
            return None;
        }
        let seq = loop {
            match self.retransmit.pop_front() {
                Some(s) if self.acked[s as usize] || self.unacked.contains_key(&s) => continue,
                Some(s) => break s,
                None if self.next_seq < self.segments => {
                    self.next_seq += 1;
                    break self.next_seq - 1;
                }
                None => return None,
            }
        };
        self.unacked.insert(seq, now);
        self.send_log.push_back((now, seq));
        Some(seq)
    }

    /// Processes the ACK for `seq`; `echo_ns` is the transmit time of the
    /// acknowledged copy.
    pub fn on_ack(&mut self, seq: u32, echo_ns: u64, now: u64) {
        let sample = now.saturating_sub(echo_ns) as f64;
        self.srtt_ns = Some(match self.srtt_ns {
            Some(s) => 0.875 * s + 0.125 * sample,
            None => sample,
        });
        if self.acked[seq as usize] {
            return;
        }
        self.acked[seq as usize] = true;
        self.acked_count += 1;
        self.unacked.remove(&seq);
        if self.cwnd < self.ssthresh {
            self.cwnd += 1.0;
        } else {
            self.cwnd += 1.0 / self.cwnd;
        }
        self.cwnd = self.cwnd.min(MAX_CWND);
    }

    /// Declares segments older than the RTO lost and queues them for
    /// retransmission. Returns the number of segments declared lost.
    pub fn check_timeout(&mut self, now: u64) -> usize {
        let rto = self.rto_ns();
        let mut lost = 0;
        while let Some(&(sent, seq)) = self.send_log.front() {
            if self.unacked.get(&seq) != Some(&sent) {
                self.send_log.pop_front();
                continue;
            }
            if now < sent + rto {
                break;
            }
            self.send_log.pop_front();
            self.unacked.remove(&seq);
            self.retransmit.push_back(seq);
            lost += 1;
            if self.last_reduction_ns.is_none_or(|t| sent >= t) {
                self.ssthresh = (self.cwnd / 2.0).max(2.0);
                self.cwnd = self.ssthresh.max(MIN_CWND);
                self.last_reduction_ns = Some(now);
            }
        }
        lost
    }
}

/// Constant-rate source. Credit accrues in bits every tick.
#[derive(Debug, Clone)]
pub struct UdpSender {
    segments: u32,
    next_seq: u32,
    credit_bits: f64,
    bits_per_tick: f64,
}

impl UdpSender {
    /// `first_packet_bits` of credit are granted up front so the first
    /// packet leaves at flow start.
    pub fn new(segments: u32, rate_mbps: f64, tick_ns: u64, first_packet_bits: f64) -> Self {
        Self {
            segments,
            next_seq: 0,
            credit_bits: first_packet_bits,
            bits_per_tick: rate_mbps * tick_ns as f64 / 1000.0,
        }
    }

    pub fn accrue(&mut self) {
        self.credit_bits += self.bits_per_tick;
    }

    /// Next segment if enough credit exists for `wire_bits` of it.
    pub fn poll_send(&mut self, wire_bits: f64) -> Option<u32> {
        if self.next_seq >= self.segments || self.credit_bits < wire_bits {
            return None;
        }
        self.credit_bits -= wire_bits;
        self.next_seq += 1;
        Some(self.next_seq - 1)
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    pub fn is_done(&self) -> bool {
        self.next_seq >= self.segments
    }
}
