//! Seedable synthetic traffic: Poisson flow arrivals, log-normal sizes and a
//! TCP/UDP mix, calibrated so that aggregate demand is a chosen multiple of
//! the network's capacity.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use thiserror::Error;

use crate::topology::{NodeId, Topology};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("invalid traffic config: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: usize,
    pub src: NodeId,
    pub dst: NodeId,
    /// Payload bytes.
    pub size: u64,
    /// Milliseconds from episode start.
    pub start: f64,
    pub protocol: Protocol,
    /// Mb/s, only meaningful for UDP.
    pub udp_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSequence {
    pub seed: u64,
    pub flows: Vec<FlowSpec>,
}

impl TrafficSequence {
    pub fn empty(seed: u64) -> Self {
        Self { seed, flows: Vec::new() }
    }

    pub fn total_bytes(&self) -> u64 {
        self.flows.iter().map(|f| f.size).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    /// Offered load as a multiple of the network capacity.
    pub load_factor: f64,
    pub tcp_fraction: f64,
    pub udp_rate_mbps: f64,
    pub size_median_bytes: f64,
    /// Standard deviation of log(size).
    pub size_sigma: f64,
    /// Episode length in milliseconds.
    pub horizon_ms: f64,
    /// Demand pairs; `None` means every ordered pair of distinct nodes.
    pub pairs: Option<Vec<(NodeId, NodeId)>>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            load_factor: 1.5,
            tcp_fraction: 0.8,
            udp_rate_mbps: 5.0,
            size_median_bytes: 20_000.0,
            size_sigma: 1.8,
            horizon_ms: 2000.0,
            pairs: None,
        }
    }
}

/// Contents of a key=value traffic config file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficFile {
    pub seed: Option<u64>,
    pub config: TrafficConfig,
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: &str| Err(TrafficError::Config(m.to_string()));
        if !(self.load_factor > 0.0 && self.load_factor.is_finite()) {
            return bad("load_factor must be > 0");
        }
        if !(0.0..=1.0).contains(&self.tcp_fraction) {
            return bad("tcp_fraction must be in [0, 1]");
        }
        if !(self.udp_rate_mbps > 0.0 && self.udp_rate_mbps.is_finite()) {
            return bad("udp_rate_mbps must be > 0");
        }
        if !(self.size_median_bytes >= 1.0 && self.size_median_bytes.is_finite()) {
            return bad("size_median_bytes must be >= 1");
        }
        if !(self.size_sigma >= 0.0 && self.size_sigma.is_finite()) {
            return bad("size_sigma must be >= 0");
        }
        if !(self.horizon_ms > 0.0 && self.horizon_ms.is_finite()) {
            return bad("horizon_ms must be > 0");
        }
        if let Some(pairs) = &self.pairs {
            if pairs.is_empty() {
                return bad("pairs must not be empty");
            }
            if pairs.iter().any(|(s, d)| s == d) {
                return bad("pairs must have distinct endpoints");
            }
        }
        Ok(())
    }

    /// Mean of the log-normal size distribution.
    pub fn mean_flow_size(&self) -> f64 {
        self.size_median_bytes * (self.size_sigma * self.size_sigma / 2.0).exp()
    }

    pub fn demand_pairs(&self, topo: &Topology) -> Vec<(NodeId, NodeId)> {
        match &self.pairs {
            Some(p) => p.clone(),
            None => {
                let n = topo.num_nodes();
                (0..n)
                    .flat_map(|s| (0..n).filter(move |&d| d != s).map(move |d| (s, d)))
                    .collect()
            }
        }
    }

    pub fn parse(text: &str) -> Result<TrafficFile, TrafficError> {
        let mut cfg = TrafficConfig::default();
        let mut seed = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TrafficError::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || value.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            match key {
                "seed" => seed = Some(value.parse().map_err(|e| err(format!("seed: {e}")))?),
                "load_factor" => cfg.load_factor = num()?,
                "tcp_fraction" => cfg.tcp_fraction = num()?,
                "udp_rate_mbps" => cfg.udp_rate_mbps = num()?,
                "size_median_bytes" => cfg.size_median_bytes = num()?,
                "size_sigma" => cfg.size_sigma = num()?,
                "horizon_ms" => cfg.horizon_ms = num()?,
                "pairs" => {
                    let mut pairs = Vec::new();
                    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        let (s, d) = item
                            .split_once('-')
                            .ok_or_else(|| err(format!("pair `{item}` must be `src-dst`")))?;
                        let parse = |x: &str| {
                            x.trim().parse::<NodeId>().map_err(|e| err(format!("pair `{item}`: {e}")))
                        };
                        pairs.push((parse(s)?, parse(d)?));
                    }
                    cfg.pairs = Some(pairs);
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(TrafficFile { seed, config: cfg })
    }

    /// Canonical key=value rendering, used for config fingerprints.
    pub fn to_text(&self) -> String {
        let mut kv = BTreeMap::new();
        kv.insert("load_factor", self.load_factor.to_string());
        kv.insert("tcp_fraction", self.tcp_fraction.to_string());
        kv.insert("udp_rate_mbps", self.udp_rate_mbps.to_string());
        kv.insert("size_median_bytes", self.size_median_bytes.to_string());
        kv.insert("size_sigma", self.size_sigma.to_string());
        kv.insert("horizon_ms", self.horizon_ms.to_string());
        if let Some(p) = &self.pairs {
            let s: Vec<String> = p.iter().map(|(a, b)| format!("{a}-{b}")).collect();
            kv.insert("pairs", s.join(","));
        }
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub fn load_traffic_config(path: impl AsRef<Path>) -> Result<TrafficFile, TrafficError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TrafficError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TrafficConfig::parse(&text)
}

/// Capacity in Mb/s that the demand pairs can jointly sustain, estimated as
/// the tighter of two bounds: the most constrained pair's min-cut scaled by
/// its share of the (uniform) demand, and the total link capacity divided by
/// the mean minimum hop count of the pairs.
pub fn network_capacity(topo: &Topology, pairs: &[(NodeId, NodeId)]) -> f64 {
    assert!(!pairs.is_empty());
    let share = pairs.len() as f64;
    let cut_bound = pairs
        .iter()
        .map(|&(s, d)| topo.min_cut(s, d))
        .fold(f64::INFINITY, f64::min)
        * share;
    let mut hops_to: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    let mut hop_sum = 0usize;
    for &(s, d) in pairs {
        let hops = hops_to.entry(d).or_insert_with(|| topo.hop_distances_to(d));
        hop_sum += hops[s];
    }
    let mean_hops = hop_sum as f64 / share;
    let total: f64 = topo.links().iter().map(|l| l.data_rate).sum();
    cut_bound.min(total / mean_hops)
}

/// Bytes the network can carry over the configured horizon.
pub fn episode_capacity_bytes(topo: &Topology, cfg: &TrafficConfig) -> f64 {
    let pairs = cfg.demand_pairs(topo);
    // 1 Mb/s for 1 ms is 125 bytes.
    network_capacity(topo, &pairs) * cfg.horizon_ms * 125.0
}

pub fn generate_traffic(
    topo: &Topology,
    seed: u64,
    cfg: &TrafficConfig,
) -> Result<TrafficSequence, TrafficError> {
    cfg.validate()?;
    let pairs = cfg.demand_pairs(topo);
    if let Some((s, d)) = pairs
        .iter()
        .find(|&&(s, d)| s >= topo.num_nodes() || d >= topo.num_nodes())
    {
        return Err(TrafficError::Config(format!("pair {s}-{d} outside topology")));
    }
    let target_bytes = cfg.load_factor * episode_capacity_bytes(topo, cfg);
    let flows_per_ms = target_bytes / cfg.mean_flow_size() / cfg.horizon_ms;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(flows_per_ms).map_err(|e| TrafficError::Config(e.to_string()))?;
    let sizes = LogNormal::new(cfg.size_median_bytes.ln(), cfg.size_sigma)
        .map_err(|e| TrafficError::Config(e.to_string()))?;

    let mut flows = Vec::new();
    let mut t = gaps.sample(&mut rng);
    while t < cfg.horizon_ms {
        let (src, dst) = pairs[rng.random_range(0..pairs.len())];
        let size = sizes.sample(&mut rng).round().max(1.0) as u64;
        let protocol = if rng.random::<f64>() < cfg.tcp_fraction {
            Protocol::Tcp
        } else {
            Protocol::Udp
        };
        flows.push(FlowSpec {
            id: flows.len(),
            src,
            dst,
            size,
            start: t,
            protocol,
            udp_rate: cfg.udp_rate_mbps,
        });
        t += gaps.sample(&mut rng);
    }
    Ok(TrafficSequence { seed, flows })
}

/// Demand rate in Mb/s: total payload over the horizon.
pub fn offered_load(seq: &TrafficSequence, horizon_ms: f64) -> f64 {
    assert!(horizon_ms > 0.0, "horizon must be positive");
    seq.total_bytes() as f64 * 8.0 / (horizon_ms * 1000.0)
}
