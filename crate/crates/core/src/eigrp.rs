//! Telemetry-oblivious baseline: shortest paths over EIGRP-style composite
//! link costs (K1 = K3 = 1, other K values 0).
//!
//! Classic EIGRP takes the minimum bandwidth along a path; here the
//! bandwidth term is charged per link and summed so that the metric is
//! additive and Dijkstra applies. On uniform-rate topologies both choose
//! the same paths.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::tables::RoutingTables;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum EigrpError {
    #[error("data rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("destination {dst} unreachable from {src}")]
    Unreachable { src: NodeId, dst: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkMetric(pub u64);

/// `256 * (10^7 / kbps + delay_us / 10)`, rounded, at least 1.
pub fn eigrp_link_metric(data_rate_mbps: f64, prop_delay_ms: f64) -> Result<LinkMetric, EigrpError> {
    if !(data_rate_mbps > 0.0) {
        return Err(EigrpError::NonPositiveRate(data_rate_mbps));
    }
    let bandwidth = 1e7 / (data_rate_mbps * 1000.0);
    let delay = prop_delay_ms * 1000.0 / 10.0;
    let cost = (256.0 * (bandwidth + delay)).round().max(1.0);
    Ok(LinkMetric(cost as u64))
}

/// Cost of each directed link, indexed like `Topology::links`.
pub fn link_costs(topo: &Topology) -> Vec<u64> {
    topo.links()
        .iter()
        .map(|l| {
            eigrp_link_metric(l.data_rate, l.prop_delay)
                .expect("topology validation guarantees positive rates")
                .0
        })
        .collect()
}

/// Least path cost from every node to `dst` (`u64::MAX` if unreachable).
pub fn costs_to(topo: &Topology, costs: &[u64], dst: NodeId) -> Vec<u64> {
    let mut dist = vec![u64::MAX; topo.num_nodes()];
    dist[dst] = 0;
    let mut heap = BinaryHeap::from([Reverse((0u64, dst))]);
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        // relax links u -> v
        for &u in topo.neighbors(v) {
            let li = topo.link_between(u, v).expect("neighbors are linked both ways");
            let nd = d + costs[li];
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Reverse((nd, u)));
            }
        }
    }
    dist
}

/// Per-destination shortest-path next hops; ties go to the smallest
/// next-hop id.
pub fn shortest_path_tables(topo: &Topology) -> Result<RoutingTables, EigrpError> {
    let costs = link_costs(topo);
    let n = topo.num_nodes();
    let mut tables = RoutingTables::new(n);
    for z in 0..n {
        let dist = costs_to(topo, &costs, z);
        for u in (0..n).filter(|&u| u != z) {
            if dist[u] == u64::MAX {
                return Err(EigrpError::Unreachable { src: u, dst: z });
            }
            let next = topo
                .neighbors(u)
                .iter()
                .copied()
                .find(|&v| {
                    let li = topo.link_between(u, v).expect("neighbor");
                    dist[v] != u64::MAX && costs[li] + dist[v] == dist[u]
                })
                .expect("some neighbor lies on a shortest path");
            tables.set(u, z, next);
        }
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_metric_values() {
        assert_eq!(eigrp_link_metric(100.0, 1.0).unwrap(), LinkMetric(51_200));
        assert_eq!(eigrp_link_metric(10.0, 0.0).unwrap(), LinkMetric(256_000));
        assert!(eigrp_link_metric(0.0, 1.0).is_err());
        assert!(eigrp_link_metric(-3.0, 1.0).is_err());
        // tiny but positive
        assert_eq!(eigrp_link_metric(1e12, 0.0).unwrap(), LinkMetric(1));
    }

    #[test]
    fn metric_monotone() {
        let rates = [1.0, 10.0, 50.0, 100.0, 1000.0];
        for w in rates.windows(2) {
            assert!(eigrp_link_metric(w[0], 1.0).unwrap() > eigrp_link_metric(w[1], 1.0).unwrap());
        }
        let delays = [0.0, 0.5, 1.0, 5.0];
        for w in delays.windows(2) {
            assert!(eigrp_link_metric(100.0, w[0]).unwrap() < eigrp_link_metric(100.0, w[1]).unwrap());
        }
    }

    #[test]
    fn line_routes_through_middle() {
        let topo = Topology::from_cables(3, &[(0, 1, 10.0, 1.0, 5), (1, 2, 10.0, 1.0, 5)]).unwrap();
        let t = shortest_path_tables(&topo).unwrap();
        assert_eq!(t.get(0, 2), Some(1));
        assert_eq!(t.get(2, 0), Some(1));
    }

    #[test]
    fn two_path_prefers_fast_route() {
        let t = shortest_path_tables(&Topology::two_path()).unwrap();
        assert_eq!(t.get(0, 3), Some(1));
        assert_eq!(t.get(3, 0), Some(1));
    }

    #[test]
    fn ring_of_five_takes_nearer_direction() {
        let cables: Vec<_> = (0..5).map(|i| (i, (i + 1) % 5, 100.0, 1.0, 10)).collect();
        let topo = Topology::from_cables(5, &cables).unwrap();
        let t = shortest_path_tables(&topo).unwrap();
        for u in 0..5 {
            assert_eq!(t.get(u, (u + 1) % 5), Some((u + 1) % 5));
            assert_eq!(t.get(u, (u + 4) % 5), Some((u + 4) % 5));
            // two hops either way is strictly shorter than three
            assert_eq!(t.get(u, (u + 2) % 5), Some((u + 1) % 5));
            assert_eq!(t.get(u, (u + 3) % 5), Some((u + 4) % 5));
        }
    }
}
