//! Static network description.
//!
//! A topology file is line oriented:
//!
//! ```text
//! nodes 5
//! link 0 1 100 1 100    # a b rate_mbps delay_ms buffer_pkts
//! ```
//!
//! Each `link` line describes one full-duplex cable and expands into two
//! directed links, `a -> b` first. Blank lines and `#` comments are ignored.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use thiserror::Error;

pub type NodeId = usize;

/// The default five-node topology: ring 0-1-2-3-4-0 plus chord 0-2.
pub const MINI5: &str = include_str!("../data/mini5.topo");

/// Two disjoint routes between node 0 and node 3: 0-1-3 at 100 Mb/s and
/// 0-2-3 at 50 Mb/s.
pub const TWO_PATH: &str = include_str!("../data/two_path.topo");

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("link {src}->{dst}: {msg}")]
    InvalidLink { src: NodeId, dst: NodeId, msg: String },
    #[error("topology is disconnected: node {0} unreachable from node 0")]
    Disconnected(NodeId),
    #[error("topology has no nodes")]
    Empty,
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    /// Megabits per second.
    pub data_rate: f64,
    /// Milliseconds.
    pub prop_delay: f64,
    /// Egress queue capacity in packets.
    pub buffer: u32,
}

/// A validated, bidirectionally cabled, connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    num_nodes: usize,
    links: Vec<Link>,
    neighbors: Vec<Vec<NodeId>>,
    // link_index[u * n + v] = index of link u->v
    link_index: Vec<Option<usize>>,
}

impl Topology {
    /// Builds and validates a topology from directed links.
    pub fn new(num_nodes: usize, links: Vec<Link>) -> Result<Self, TopologyError> {
        if num_nodes == 0 {
            return Err(TopologyError::Empty);
        }
        let n = num_nodes;
        let mut link_index = vec![None; n * n];
        for (i, l) in links.iter().enumerate() {
            let bad = |msg: &str| TopologyError::InvalidLink {
                src: l.src,
                dst: l.dst,
                msg: msg.to_string(),
            };
            if l.src >= n || l.dst >= n {
                return Err(bad("node id out of range"));
            }
            if l.src == l.dst {
                return Err(bad("self-loop"));
            }
            if !(l.data_rate.is_finite() && l.data_rate > 0.0) {
                return Err(bad("data_rate must be > 0"));
            }
            if !(l.prop_delay.is_finite() && l.prop_delay >= 0.0) {
                return Err(bad("prop_delay must be >= 0"));
            }
            if l.buffer < 1 {
                return Err(bad("buffer must be >= 1"));
            }
            let slot = &mut link_index[l.src * n + l.dst];
            if slot.is_some() {
                return Err(bad("duplicate link"));
            }
            *slot = Some(i);
        }
        for l in &links {
            if link_index[l.dst * n + l.src].is_none() {
                return Err(TopologyError::InvalidLink {
                    src: l.src,
                    dst: l.dst,
                    msg: "missing reverse link".into(),
                });
            }
        }
        let neighbors: Vec<Vec<NodeId>> = (0..n)
            .map(|u| (0..n).filter(|&v| link_index[u * n + v].is_some()).collect())
            .collect();

        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(TopologyError::Disconnected(u));
        }

        Ok(Self {
            num_nodes,
            links,
            neighbors,
            link_index,
        })
    }

    /// Builds a topology from undirected cables `(a, b, rate, delay, buffer)`.
    pub fn from_cables(
        num_nodes: usize,
        cables: &[(NodeId, NodeId, f64, f64, u32)],
    ) -> Result<Self, TopologyError> {
        let mut links = Vec::with_capacity(cables.len() * 2);
        for &(a, b, data_rate, prop_delay, buffer) in cables {
            for (src, dst) in [(a, b), (b, a)] {
                links.push(Link {
                    src,
                    dst,
                    data_rate,
                    prop_delay,
                    buffer,
                });
            }
        }
        Self::new(num_nodes, links)
    }

    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut num_nodes = None;
        let mut cables = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TopologyError::Parse { line: i + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "nodes" => {
                    if fields.len() != 2 {
                        return Err(err("expected `nodes N`".into()));
                    }
                    if num_nodes.is_some() {
                        return Err(err("duplicate `nodes` header".into()));
                    }
                    num_nodes = Some(
                        fields[1]
                            .parse::<usize>()
                            .map_err(|e| err(format!("node count: {e}")))?,
                    );
                }
                "link" => {
                    if num_nodes.is_none() {
                        return Err(err("`link` before `nodes` header".into()));
                    }
                    if fields.len() != 6 {
                        return Err(err(
                            "expected `link <a> <b> <rate_mbps> <delay_ms> <buffer_pkts>`".into(),
                        ));
                    }
                    let a = fields[1].parse().map_err(|e| err(format!("a: {e}")))?;
                    let b = fields[2].parse().map_err(|e| err(format!("b: {e}")))?;
                    let rate = fields[3].parse().map_err(|e| err(format!("rate: {e}")))?;
                    let delay = fields[4].parse().map_err(|e| err(format!("delay: {e}")))?;
                    let buf = fields[5].parse().map_err(|e| err(format!("buffer: {e}")))?;
                    cables.push((a, b, rate, delay, buf));
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let n = num_nodes.ok_or(TopologyError::Parse {
            line: 0,
            msg: "missing `nodes N` header".into(),
        })?;
        Self::from_cables(n, &cables)
    }

    pub fn mini5() -> Self {
        Self::parse(MINI5).expect("bundled mini5 topology is valid")
    }

    pub fn two_path() -> Self {
        Self::parse(TWO_PATH).expect("bundled two-path topology is valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, idx: usize) -> &Link {
        &self.links[idx]
    }

    /// Sorted neighbor set of `u`.
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.neighbors[u]
    }

    pub fn link_between(&self, u: NodeId, v: NodeId) -> Option<usize> {
        if u >= self.num_nodes || v >= self.num_nodes {
            return None;
        }
        self.link_index[u * self.num_nodes + v]
    }

    pub fn is_neighbor(&self, u: NodeId, v: NodeId) -> bool {
        self.link_between(u, v).is_some()
    }

    pub fn max_data_rate(&self) -> f64 {
        self.links.iter().map(|l| l.data_rate).fold(0.0, f64::max)
    }

    pub fn max_prop_delay(&self) -> f64 {
        self.links.iter().map(|l| l.prop_delay).fold(0.0, f64::max)
    }

    /// Max-flow between `s` and `t` in Mb/s (Edmonds-Karp over link rates).
    pub fn min_cut(&self, s: NodeId, t: NodeId) -> f64 {
        let n = self.num_nodes;
        let mut residual = vec![0.0; n * n];
        for l in &self.links {
            residual[l.src * n + l.dst] += l.data_rate;
        }
        let mut flow = 0.0;
        loop {
            let mut parent = vec![usize::MAX; n];
            parent[s] = s;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if parent[v] == usize::MAX && residual[u * n + v] > 1e-12 {
                        parent[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if parent[t] == usize::MAX {
                return flow;
            }
            let mut bottleneck = f64::INFINITY;
            let mut v = t;
            while v != s {
                let u = parent[v];
                bottleneck = bottleneck.min(residual[u * n + v]);
                v = u;
            }
            let mut v = t;
            while v != s {
                let u = parent[v];
                residual[u * n + v] -= bottleneck;
                residual[v * n + u] += bottleneck;
                v = u;
            }
            flow += bottleneck;
        }
    }

    /// Hop counts of minimum-hop paths from every node to `t`.
    pub fn hop_distances_to(&self, t: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_nodes];
        dist[t] = 0;
        let mut queue = VecDeque::from([t]);
        while let Some(v) = queue.pop_front() {
            for &u in &self.neighbors[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Applies a node relabeling `perm[old] = new`, keeping link order.
    pub fn relabel(&self, perm: &[NodeId]) -> Result<Self, TopologyError> {
        let links = self
            .links
            .iter()
            .map(|l| Link {
                src: perm[l.src],
                dst: perm[l.dst],
                ..l.clone()
            })
            .collect();
        Self::new(self.num_nodes, links)
    }

    /// Serializes back to the line format, one `link` line per cable.
    pub fn to_text(&self) -> String {
        let mut out = format!("nodes {}\n", self.num_nodes);
        let mut emitted = vec![false; self.links.len()];
        for (i, l) in self.links.iter().enumerate() {
            if emitted[i] {
                continue;
            }
            if let Some(rev) = self.link_between(l.dst, l.src) {
                emitted[rev] = true;
            }
            out.push_str(&format!(
                "link {} {} {} {} {}\n",
                l.src, l.dst, l.data_rate, l.prop_delay, l.buffer
            ));
        }
        out
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nodes, {} directed links", self.num_nodes, self.links.len())
    }
}

pub fn load_topology(path: impl AsRef<Path>) -> Result<Topology, TopologyError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TopologyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Topology::parse(&text)
}
