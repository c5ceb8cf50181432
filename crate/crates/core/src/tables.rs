//! Next-hop forwarding tables: `(node, destination) -> neighbor`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::topology::{NodeId, Topology};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TableError {
    #[error("missing next hop for pair ({0},{1})")]
    Missing(NodeId, NodeId),
    #[error("next hop {2} for pair ({0},{1}) is not a neighbor of {0}")]
    NotNeighbor(NodeId, NodeId, NodeId),
    #[error("table covers {0} nodes but topology has {1}")]
    SizeMismatch(usize, usize),
}

/// A (possibly partial) next-hop map over ordered node pairs `u != z`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoutingTables {
    num_nodes: usize,
    next: Vec<Option<NodeId>>,
}

impl RoutingTables {
    pub fn new(num_nodes: usize) -> Self {
        Self { num_nodes, next: vec![None; num_nodes * num_nodes] }
    }

    /// Builds a total table by evaluating `f(u, z)` for every pair `u != z`.
    pub fn from_fn(num_nodes: usize, mut f: impl FnMut(NodeId, NodeId) -> NodeId) -> Self {
        let mut t = Self::new(num_nodes);
        for u in 0..num_nodes {
            for z in 0..num_nodes {
                if u != z {
                    t.set(u, z, f(u, z));
                }
            }
        }
        t
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn get(&self, u: NodeId, z: NodeId) -> Option<NodeId> {
        self.next[u * self.num_nodes + z]
    }

    pub fn set(&mut self, u: NodeId, z: NodeId, v: NodeId) {
        assert!(u != z, "no entry for u == z");
        self.next[u * self.num_nodes + z] = Some(v);
    }

    pub fn remove(&mut self, u: NodeId, z: NodeId) {
        self.next[u * self.num_nodes + z] = None;
    }

    /// Number of ordered pairs `u != z`.
    pub fn num_entries(&self) -> usize {
        self.num_nodes * self.num_nodes.saturating_sub(1)
    }

    /// Iterates `(u, z, next_hop)` over all ordered pairs `u != z`.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, NodeId, Option<NodeId>)> + '_ {
        let n = self.num_nodes;
        (0..n).flat_map(move |u| {
            (0..n).filter(move |&z| z != u).map(move |z| (u, z, self.get(u, z)))
        })
    }

    /// Checks totality and neighbor validity against `topo`.
    pub fn validate(&self, topo: &Topology) -> Result<(), TableError> {
        if self.num_nodes != topo.num_nodes() {
            return Err(TableError::SizeMismatch(self.num_nodes, topo.num_nodes()));
        }
        for (u, z, v) in self.entries() {
            match v {
                None => return Err(TableError::Missing(u, z)),
                Some(v) if !topo.is_neighbor(u, v) => return Err(TableError::NotNeighbor(u, z, v)),
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// CSV with header `u,z,next_hop`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,z,next_hop\n");
        for (u, z, v) in self.entries() {
            let v = v.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{u},{z},{v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_reports_missing_and_non_neighbor() {
        let topo = Topology::mini5();
        let mut t = RoutingTables::from_fn(5, |u, z| {
            if topo.is_neighbor(u, z) { z } else { topo.neighbors(u)[0] }
        });
        assert!(t.validate(&topo).is_ok());
        t.remove(0, 3);
        assert_eq!(t.validate(&topo), Err(TableError::Missing(0, 3)));
        t.set(0, 3, 3);
        assert_eq!(t.validate(&topo), Err(TableError::NotNeighbor(0, 3, 3)));
        assert_eq!(
            RoutingTables::new(4).validate(&topo),
            Err(TableError::SizeMismatch(4, 5))
        );
    }

    #[test]
    fn entry_count() {
        let t = RoutingTables::new(5);
        assert_eq!(t.num_entries(), 20);
        assert_eq!(t.entries().count(), 20);
    }
}
