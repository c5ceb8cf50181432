//! Attributed state graphs built from topology and the latest telemetry.
//!
//! Edge features (one row per directed link, in topology order):
//! `[rate / max rate, delay / max delay, load, queue fill, drops / buffer]`.
//! Node features: `[mean incident load, max incident queue fill, delivered /
//! injected]`. Global features: `[step / horizon, injected / mean injected]`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::sim::Telemetry;
use crate::topology::Topology;

pub const EDGE_FEATURES: usize = 5;
pub const NODE_FEATURES: usize = 3;
pub const GLOBAL_FEATURES: usize = 2;

/// Edge feature columns carrying telemetry.
pub const EDGE_TELEMETRY: std::ops::Range<usize> = 2..5;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("telemetry has {got} {what}, topology has {expected}")]
    ShapeMismatch { what: &'static str, got: usize, expected: usize },
    #[error("non-finite feature value {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRule {
    /// Clamp to `[0, 1]`.
    Unit,
    /// Load ratio: clamp to `[0, 2]`; everything at or above capacity
    /// saturates at 1.
    Load,
    /// Clamp to `[-1, 1]`.
    Signed,
}

impl FeatureRule {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            FeatureRule::Unit => x.clamp(0.0, 1.0),
            FeatureRule::Load => x.clamp(0.0, 2.0).min(1.0),
            FeatureRule::Signed => x.clamp(-1.0, 1.0),
        }
    }
}

pub const EDGE_RULES: [FeatureRule; EDGE_FEATURES] = [
    FeatureRule::Unit,
    FeatureRule::Unit,
    FeatureRule::Load,
    FeatureRule::Unit,
    FeatureRule::Unit,
];
pub const NODE_RULES: [FeatureRule; NODE_FEATURES] = [FeatureRule::Unit; NODE_FEATURES];
pub const GLOBAL_RULES: [FeatureRule; GLOBAL_FEATURES] = [FeatureRule::Unit, FeatureRule::Load];

/// Applies `rules` column-wise to row-major `raw`.
pub fn normalize_features(raw: &[f64], rules: &[FeatureRule]) -> Result<Vec<f64>, StateError> {
    raw.iter()
        .enumerate()
        .map(|(k, &x)| {
            if !x.is_finite() {
                return Err(StateError::NonFinite(x));
            }
            Ok(rules[k % rules.len()].apply(x))
        })
        .collect()
}

/// Where in the episode a state was observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub step_index: usize,
    pub horizon: usize,
    pub step_ms: f64,
    /// Expected payload bytes injected per step over the episode.
    pub mean_step_injected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// `num_nodes x NODE_FEATURES`, row-major.
    pub node_features: Vec<f64>,
    /// `edges.len() x EDGE_FEATURES`, row-major.
    pub edge_features: Vec<f64>,
    pub global_features: Vec<f64>,
}

impl StateGraph {
    pub fn node_row(&self, v: usize) -> &[f64] {
        &self.node_features[v * NODE_FEATURES..(v + 1) * NODE_FEATURES]
    }

    pub fn edge_row(&self, e: usize) -> &[f64] {
        &self.edge_features[e * EDGE_FEATURES..(e + 1) * EDGE_FEATURES]
    }

    /// Clears every telemetry-derived node and edge feature, leaving the
    /// static link attributes and the global features.
    pub fn zero_telemetry(&mut self) {
        self.node_features.fill(0.0);
        for row in self.edge_features.chunks_mut(EDGE_FEATURES) {
            row[EDGE_TELEMETRY].fill(0.0);
        }
    }

    /// CSV block for `--dump-state`: one `node`, `edge` or `global` row each.
    pub fn to_csv_block(&self, step: usize) -> String {
        let mut out = String::new();
        let join = |r: &[f64]| r.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        for v in 0..self.num_nodes {
            let _ = writeln!(out, "{step},node,{v},,{}", join(self.node_row(v)));
        }
        for (e, (s, d)) in self.edges.iter().enumerate() {
            let _ = writeln!(out, "{step},edge,{s},{d},{}", join(self.edge_row(e)));
        }
        let _ = writeln!(out, "{step},global,,,{}", join(&self.global_features));
        out
    }
}

pub const STATE_CSV_HEADER: &str = "step,kind,a,b,features...";

pub fn build_state_graph(
    topo: &Topology,
    tel: &Telemetry,
    ctx: &StepContext,
) -> Result<StateGraph, StateError> {
    let (n, m) = (topo.num_nodes(), topo.num_links());
    if tel.links.len() != m {
        return Err(StateError::ShapeMismatch { what: "links", got: tel.links.len(), expected: m });
    }
    if tel.delivered.len() != n {
        return Err(StateError::ShapeMismatch {
            what: "nodes",
            got: tel.delivered.len(),
            expected: n,
        });
    }
    let max_rate = topo.max_data_rate();
    let max_delay = topo.max_prop_delay();

    let mut edge_raw = Vec::with_capacity(m * EDGE_FEATURES);
    for (l, t) in topo.links().iter().zip(&tel.links) {
        let capacity_bits = l.data_rate * ctx.step_ms * 1000.0;
        edge_raw.extend_from_slice(&[
            l.data_rate / max_rate,
            if max_delay > 0.0 { l.prop_delay / max_delay } else { 0.0 },
            t.bytes_tx as f64 * 8.0 / capacity_bits,
            t.queue_fill,
            t.pkts_dropped as f64 / l.buffer as f64,
        ]);
    }
    let edge_features = normalize_features(&edge_raw, &EDGE_RULES)?;

    let mut load_sum = vec![0.0; n];
    let mut incident = vec![0usize; n];
    let mut max_fill: Vec<f64> = vec![0.0; n];
    for (e, l) in topo.links().iter().enumerate() {
        let row = &edge_features[e * EDGE_FEATURES..(e + 1) * EDGE_FEATURES];
        for v in [l.src, l.dst] {
            load_sum[v] += row[2];
            incident[v] += 1;
            max_fill[v] = max_fill[v].max(row[3]);
        }
    }
    let injected = tel.injected_bytes as f64;
    let mut node_raw = Vec::with_capacity(n * NODE_FEATURES);
    for v in 0..n {
        node_raw.extend_from_slice(&[
            if incident[v] > 0 { load_sum[v] / incident[v] as f64 } else { 0.0 },
            max_fill[v],
            if injected > 0.0 { tel.delivered[v] as f64 / injected } else { 0.0 },
        ]);
    }
    let node_features = normalize_features(&node_raw, &NODE_RULES)?;

    let global_raw = [
        ctx.step_index as f64 / ctx.horizon.max(1) as f64,
        if ctx.mean_step_injected > 0.0 { injected / ctx.mean_step_injected } else { 0.0 },
    ];
    let global_features = normalize_features(&global_raw, &GLOBAL_RULES)?;

    Ok(StateGraph {
        num_nodes: n,
        edges: topo.links().iter().map(|l| (l.src, l.dst)).collect(),
        node_features,
        edge_features,
        global_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::LinkTelemetry;

    fn ctx() -> StepContext {
        StepContext { step_index: 10, horizon: 400, step_ms: 5.0, mean_step_injected: 1000.0 }
    }

    #[test]
    fn idle_network_has_zero_dynamic_features() {
        let topo = Topology::mini5();
        let g = build_state_graph(&topo, &Telemetry::zeros(5, 12), &ctx()).unwrap();
        assert!(g.node_features.iter().all(|&x| x == 0.0));
        for e in 0..12 {
            assert_eq!(g.edge_row(e), &[1.0, 1.0, 0.0, 0.0, 0.0]);
        }
        assert_eq!(g.global_features, vec![10.0 / 400.0, 0.0]);
    }

    #[test]
    fn static_features_normalize_by_max() {
        let topo = Topology::two_path();
        let g = build_state_graph(&topo, &Telemetry::zeros(4, 8), &ctx()).unwrap();
        let rates: Vec<f64> = (0..8).map(|e| g.edge_row(e)[0]).collect();
        assert_eq!(rates, vec![1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn load_rule() {
        assert_eq!(FeatureRule::Load.apply(0.5), 0.5);
        assert_eq!(FeatureRule::Load.apply(3.0), 1.0);
        assert_eq!(FeatureRule::Load.apply(-1.0), 0.0);
        let raw = [0.5, 3.0, 1.7, 0.0, -0.2];
        let once = normalize_features(&raw, &[FeatureRule::Load]).unwrap();
        assert_eq!(once, vec![0.5, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(normalize_features(&once, &[FeatureRule::Load]).unwrap(), once);
        assert!(normalize_features(&[f64::NAN], &[FeatureRule::Unit]).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let topo = Topology::mini5();
        let err = build_state_graph(&topo, &Telemetry::zeros(5, 11), &ctx()).unwrap_err();
        assert!(matches!(err, StateError::ShapeMismatch { what: "links", .. }));
        let err = build_state_graph(&topo, &Telemetry::zeros(4, 12), &ctx()).unwrap_err();
        assert!(matches!(err, StateError::ShapeMismatch { what: "nodes", .. }));
    }

    #[test]
    fn node_features_aggregate_incident_links() {
        let topo = Topology::two_path();
        let mut tel = Telemetry::zeros(4, 8);
        // link 0 is 0->1 at 100 Mb/s: 5 ms carries 62_500 bytes
        tel.links[0] = LinkTelemetry { bytes_tx: 31_250, pkts_dropped: 50, queue_fill: 0.4 };
        tel.delivered[3] = 300;
        tel.injected_bytes = 1200;
        let g = build_state_graph(&topo, &tel, &ctx()).unwrap();
        assert_eq!(g.edge_row(0), &[1.0, 1.0, 0.5, 0.4, 0.5]);
        // node 0 touches links 0,1 (to/from 1) and 4,5 (to/from 2)
        assert_eq!(g.node_row(0), &[0.125, 0.4, 0.0]);
        assert_eq!(g.node_row(3)[2], 0.25);
        assert_eq!(g.global_features[1], 1.0);
        let mut z = g.clone();
        z.zero_telemetry();
        assert_eq!(z.edge_row(0), &[1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(z.node_features.iter().all(|&x| x == 0.0));
        assert_eq!(z.global_features, g.global_features);
    }

    #[test]
    fn relabeling_permutes_rows() {
        let topo = Topology::two_path();
        let perm = [2, 0, 3, 1];
        let relabeled = topo.relabel(&perm).unwrap();
        let mut tel = Telemetry::zeros(4, 8);
        for (i, l) in tel.links.iter_mut().enumerate() {
            *l = LinkTelemetry {
                bytes_tx: 1000 * i as u64,
                pkts_dropped: i as u64,
                queue_fill: i as f64 / 10.0,
            };
        }
        tel.delivered = vec![10, 20, 30, 40];
        tel.injected_bytes = 100;
        let mut tel2 = tel.clone();
        for old in 0..4 {
            tel2.delivered[perm[old]] = tel.delivered[old];
        }
        let a = build_state_graph(&topo, &tel, &ctx()).unwrap();
        let b = build_state_graph(&relabeled, &tel2, &ctx()).unwrap();
        assert_eq!(a.edge_features, b.edge_features);
        for old in 0..4 {
            assert_eq!(a.node_row(old), b.node_row(perm[old]));
        }
    }
}
