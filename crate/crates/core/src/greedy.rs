//! Routing from embedding geometry.
//!
//! Each embedding `x_i` is split into a radius `r_i = |x_i|`, a soft radius
//! `rho_i = tanh(r_i)` and a direction `u_i`, placing node `i` at
//! `rho_i * u_i` inside the open unit ball. Squared distances between those
//! points act as negative logits for next-hop choices.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::mpn::Embeddings;
use crate::nn::{log_softmax_in_place, polar_sq_dist, soft_point, NnError, Tape, Var};
use crate::tables::RoutingTables;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum GreedyError {
    #[error("embedding row {0} is not finite")]
    NonFinite(usize),
    #[error("distance matrix covers {got} nodes, topology has {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("node {0} has no neighbors")]
    NoNeighbors(NodeId),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("fluctuation needs at least two tables")]
    TooFewTables,
    #[error("tables cover different node sets")]
    DomainMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarDecomposition {
    pub radii: Vec<f64>,
    pub rho: Vec<f64>,
    /// Unit directions, one per node; the first basis vector for `r = 0`.
    pub dirs: Vec<Vec<f64>>,
}

impl PolarDecomposition {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// The point `rho_i * u_i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        self.dirs[i].iter().map(|u| self.rho[i] * u).collect()
    }
}

pub fn decompose(emb: &Embeddings) -> Result<PolarDecomposition, GreedyError> {
    let mut dec = PolarDecomposition { radii: vec![], rho: vec![], dirs: vec![] };
    for i in 0..emb.num_nodes {
        let row = emb.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GreedyError::NonFinite(i));
        }
        let (rho, dir) = soft_point(row);
        dec.radii.push(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        dec.rho.push(rho);
        dec.dirs.push(dir);
    }
    Ok(dec)
}

/// Square matrix of squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_vec(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "distance matrix size");
        Self { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let data = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

/// `rho_i^2 + rho_j^2 - 2 rho_i rho_j u_i.u_j`, with an exact zero diagonal.
pub fn pairwise_sq_dist(dec: &PolarDecomposition) -> DistanceMatrix {
    let n = dec.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = polar_sq_dist(dec.rho[i], &dec.dirs[i], dec.rho[j], &dec.dirs[j]);
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    DistanceMatrix { n, data }
}

/// Convenience: embeddings straight to distances.
pub fn embedding_distances(emb: &Embeddings) -> Result<DistanceMatrix, GreedyError> {
    Ok(pairwise_sq_dist(&decompose(emb)?))
}

fn check_size(dist: &DistanceMatrix, topo: &Topology) -> Result<(), GreedyError> {
    if dist.len() != topo.num_nodes() {
        return Err(GreedyError::SizeMismatch { got: dist.len(), expected: topo.num_nodes() });
    }
    Ok(())
}

/// Neighbor of `u` closest to `z`; ties go to the smaller id.
pub fn greedy_next_hop(dist: &DistanceMatrix, topo: &Topology, u: NodeId, z: NodeId) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for &v in topo.neighbors(u) {
        let d = dist.get(v, z);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, v));
        }
    }
    best.map(|(_, v)| v)
}

pub fn greedy_tables(dist: &DistanceMatrix, topo: &Topology) -> Result<RoutingTables, GreedyError> {
    check_size(dist, topo)?;
    let n = topo.num_nodes();
    let mut tables = RoutingTables::new(n);
    for u in 0..n {
        for z in (0..n).filter(|&z| z != u) {
            let v = greedy_next_hop(dist, topo, u, z).ok_or(GreedyError::NoNeighbors(u))?;
            tables.set(u, z, v);
        }
    }
    Ok(tables)
}

/// Candidate layout of the `(u, z)` next-hop distributions of a topology:
/// pair `k` chooses among `candidates[offsets[k]..offsets[k + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLayout {
    pub num_nodes: usize,
    pub pairs: Vec<(NodeId, NodeId)>,
    pub offsets: Vec<usize>,
    /// `(v', z)` for every candidate `v'`.
    pub candidates: Vec<(NodeId, NodeId)>,
}

impl PolicyLayout {
    pub fn new(topo: &Topology) -> Result<Self, GreedyError> {
        let n = topo.num_nodes();
        let mut layout =
            PolicyLayout { num_nodes: n, pairs: vec![], offsets: vec![0], candidates: vec![] };
        for u in 0..n {
            if n > 1 && topo.neighbors(u).is_empty() {
                return Err(GreedyError::NoNeighbors(u));
            }
            for z in (0..n).filter(|&z| z != u) {
                layout.pairs.push((u, z));
                layout.candidates.extend(topo.neighbors(u).iter().map(|&v| (v, z)));
                layout.offsets.push(layout.candidates.len());
            }
        }
        Ok(layout)
    }

    /// Flat candidate index of each pair's chosen next hop.
    pub fn chosen_indices(&self, tables: &RoutingTables) -> Result<Vec<usize>, GreedyError> {
        if tables.num_nodes() != self.num_nodes {
            return Err(GreedyError::DomainMismatch);
        }
        self.pairs
            .iter()
            .enumerate()
            .map(|(k, &(u, z))| {
                let v = tables.get(u, z).ok_or(GreedyError::DomainMismatch)?;
                (self.offsets[k]..self.offsets[k + 1])
                    .find(|&c| self.candidates[c].0 == v)
                    .ok_or(GreedyError::DomainMismatch)
            })
            .collect()
    }

    /// Per-pair log-probabilities, laid out like `candidates`.
    pub fn log_probs(&self, dist: &DistanceMatrix, tau: f64) -> Vec<f64> {
        let scale = -1.0 / tau;
        let mut out: Vec<f64> =
            self.candidates.iter().map(|&(v, z)| scale * dist.get(v, z)).collect();
        for w in self.offsets.windows(2) {
            log_softmax_in_place(&mut out[w[0]..w[1]]);
        }
        out
    }
}

/// One sampled action with its joint log-probability and summed entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub tables: RoutingTables,
    pub log_prob: f64,
    pub entropy: f64,
}

/// Samples every `(u, z)` next hop from `softmax(-dist(v', z) / tau)` over the
/// neighbors `v'` of `u`.
pub fn boltzmann_sample(
    dist: &DistanceMatrix,
    topo: &Topology,
    tau: f64,
    rng: &mut impl Rng,
) -> Result<PolicySample, GreedyError> {
    let layout = PolicyLayout::new(topo)?;
    sample_with_layout(&layout, dist, tau, rng)
}

pub fn sample_with_layout(
    layout: &PolicyLayout,
    dist: &DistanceMatrix,
    tau: f64,
    rng: &mut impl Rng,
) -> Result<PolicySample, GreedyError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GreedyError::Temperature(tau));
    }
    if dist.len() != layout.num_nodes {
        return Err(GreedyError::SizeMismatch { got: dist.len(), expected: layout.num_nodes });
    }
    let lp = layout.log_probs(dist, tau);
    let mut tables = RoutingTables::new(layout.num_nodes);
    let mut chosen = Vec::with_capacity(layout.pairs.len());
    let mut entropy_terms = Vec::with_capacity(lp.len());
    for (k, &(u, z)) in layout.pairs.iter().enumerate() {
        let seg = layout.offsets[k]..layout.offsets[k + 1];
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = seg.end - 1;
        for c in seg.clone() {
            acc += lp[c].exp();
            if draw < acc {
                pick = c;
                break;
            }
        }
        tables.set(u, z, layout.candidates[pick].0);
        chosen.push(lp[pick]);
        entropy_terms.extend(seg.map(|c| lp[c].exp() * lp[c]));
    }
    Ok(PolicySample {
        tables,
        log_prob: chosen.iter().sum(),
        entropy: -entropy_terms.iter().sum::<f64>(),
    })
}

/// One graph of a batched policy evaluation.
pub struct PolicyItem<'a> {
    /// Row of the graph's first node in the batched embedding matrix.
    pub node_offset: usize,
    pub layout: &'a PolicyLayout,
    pub tables: &'a RoutingTables,
}

/// Joint log-probabilities and entropies (both length `items.len()`) of the
/// given tables under the Boltzmann policy of the raw embeddings `emb`.
pub fn policy_on_tape(
    tape: &mut Tape,
    emb: Var,
    items: &[PolicyItem<'_>],
    tau: f64,
) -> Result<(Var, Var), NnError> {
    let mut pairs = Vec::new();
    let mut seg = vec![0];
    let mut chosen = Vec::new();
    let mut graph_pairs = vec![0];
    let mut graph_cands = vec![0];
    for item in items {
        let base = pairs.len();
        let idx = item
            .layout
            .chosen_indices(item.tables)
            .map_err(|e| NnError::Shape(e.to_string()))?;
        chosen.extend(idx.iter().map(|c| base + c));
        pairs.extend(
            item.layout
                .candidates
                .iter()
                .map(|&(v, z)| (item.node_offset + v, item.node_offset + z)),
        );
        seg.extend(item.layout.offsets[1..].iter().map(|o| base + o));
        graph_pairs.push(chosen.len());
        graph_cands.push(pairs.len());
    }
    let d = tape.pair_sq_dist(emb, &pairs)?;
    let logits = tape.scale(d, -1.0 / tau)?;
    let lsm = tape.segment_log_softmax(logits, &seg)?;
    let picked = tape.gather_elems(lsm, &chosen)?;
    let log_prob = tape.segment_sum(picked, &graph_pairs)?;
    let p = tape.exp(lsm)?;
    let plogp = tape.mul(p, lsm)?;
    let neg = tape.segment_sum(plogp, &graph_cands)?;
    let entropy = tape.scale(neg, -1.0)?;
    Ok((log_prob, entropy))
}

/// True when every node has, for every destination, a neighbor strictly
/// closer to it.
pub fn is_greedy_embedding(dist: &DistanceMatrix, topo: &Topology) -> bool {
    let n = topo.num_nodes();
    dist.len() == n
        && (0..n).all(|u| {
            (0..n)
                .filter(|&z| z != u)
                .all(|z| topo.neighbors(u).iter().any(|&v| dist.get(v, z) < dist.get(u, z)))
        })
}

/// Pairs `(u, z)` whose next-hop walk does not reach `z` within `|V|` hops.
pub fn detect_loops(tables: &RoutingTables, topo: &Topology) -> Vec<(NodeId, NodeId)> {
    let n = topo.num_nodes();
    let mut bad = Vec::new();
    for u in 0..n {
        for z in (0..n).filter(|&z| z != u) {
            let mut at = u;
            let mut reached = false;
            for _ in 0..n {
                match tables.get(at, z) {
                    Some(v) if topo.is_neighbor(at, v) => at = v,
                    _ => break,
                }
                if at == z {
                    reached = true;
                    break;
                }
            }
            if !reached {
                bad.push((u, z));
            }
        }
    }
    bad
}

/// Mean percentage of `(u, z)` entries that change between consecutive
/// tables.
pub fn fluctuation(seq: &[RoutingTables]) -> Result<f64, GreedyError> {
    if seq.len() < 2 {
        return Err(GreedyError::TooFewTables);
    }
    let n = seq[0].num_nodes();
    if seq.iter().any(|t| t.num_nodes() != n) {
        return Err(GreedyError::DomainMismatch);
    }
    let total = (n * n.saturating_sub(1)).max(1) as f64;
    let mut sum = 0.0;
    for w in seq.windows(2) {
        let changed = w[0]
            .entries()
            .zip(w[1].entries())
            .filter(|((u, z, a), (_, _, b))| u != z && a != b)
            .count();
        sum += changed as f64 * 100.0 / total;
    }
    Ok(sum / (seq.len() - 1) as f64)
}

pub const ROUTING_CSV_HEADER: &str = "u,z,next_hop,delta_sq";

/// One row per `(u, z)`: the installed next hop and the squared distance
/// between `u` and `z`.
pub fn routing_csv(tables: &RoutingTables, dist: &DistanceMatrix) -> String {
    let mut out = String::from(ROUTING_CSV_HEADER);
    out.push('\n');
    for (u, z, v) in tables.entries() {
        if u == z {
            continue;
        }
        let hop = v.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{u},{z},{hop},{}", dist.get(u, z));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn emb(rows: &[&[f64]]) -> Embeddings {
        let d = rows[0].len();
        Embeddings::new(rows.len(), d, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    #[test]
    fn decompose_examples() {
        let dec = decompose(&emb(&[&[3.0, 4.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(dec.radii[0], 5.0);
        assert!((dec.dirs[0][0] - 0.6).abs() < 1e-15 && (dec.dirs[0][1] - 0.8).abs() < 1e-15);
        assert!((dec.rho[0] - 0.999_909_2).abs() < 1e-6);
        assert_eq!((dec.radii[1], dec.rho[1]), (0.0, 0.0));
        assert_eq!(dec.dirs[1], vec![1.0, 0.0]);
        let dec = decompose(&emb(&[&[-2.0]])).unwrap();
        assert_eq!((dec.radii[0], dec.dirs[0].clone(), dec.rho[0]), (2.0, vec![-1.0], 2f64.tanh()));
        assert_eq!(decompose(&emb(&[&[f64::NAN]])), Err(GreedyError::NonFinite(0)));
    }

    #[test]
    fn orthogonal_half_radius() {
        let dec = PolarDecomposition {
            radii: vec![0.5f64.atanh(); 2],
            rho: vec![0.5, 0.5],
            dirs: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let d = pairwise_sq_dist(&dec);
        assert!((d.get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn antipodal_far_points_stay_below_four() {
        let d = embedding_distances(&emb(&[&[50.0], &[-50.0]])).unwrap();
        assert!(d.get(0, 1) < 4.0);
        assert!(d.get(0, 1) > 3.99);
    }

    #[test]
    fn greedy_prefers_closer_neighbor_and_destination() {
        let topo = Topology::two_path();
        let d = DistanceMatrix::from_fn(4, |i, j| if i == j { 0.0 } else { (i + j) as f64 / 10.0 });
        let t = greedy_tables(&d, &topo).unwrap();
        // from 0 towards 3: Δ²(1,3)=0.4 < Δ²(2,3)=0.5
        assert_eq!(t.get(0, 3), Some(1));
        assert_eq!(t.get(0, 1), Some(1));
        let tie = DistanceMatrix::from_fn(4, |i, j| if i == j { 0.0 } else { 1.0 });
        assert_eq!(greedy_tables(&tie, &topo).unwrap().get(0, 3), Some(1));
        let wrong = DistanceMatrix::from_fn(3, |_, _| 0.0);
        assert!(matches!(greedy_tables(&wrong, &topo), Err(GreedyError::SizeMismatch { .. })));
    }

    #[test]
    fn softmax_probabilities() {
        let topo = Topology::two_path();
        let layout = PolicyLayout::new(&topo).unwrap();
        // node 0 towards 3: neighbors 1 and 2 with Δ² 0 and 1
        let d = DistanceMatrix::from_fn(4, |i, j| match (i.min(j), i.max(j)) {
            (a, b) if a == b => 0.0,
            (2, 3) => 1.0,
            (1, 3) => 0.0,
            _ => 0.5,
        });
        let lp = layout.log_probs(&d, 1.0);
        let k = layout.pairs.iter().position(|&p| p == (0, 3)).unwrap();
        let seg = &lp[layout.offsets[k]..layout.offsets[k + 1]];
        assert!((seg[0].exp() - 0.731_058_6).abs() < 1e-6);
        assert!((seg[1].exp() - 0.268_941_4).abs() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let even = DistanceMatrix::from_fn(4, |i, j| if i == j { 0.0 } else { 1.0 });
        let mut via1 = 0;
        for _ in 0..4000 {
            let s = boltzmann_sample(&even, &topo, 1.0, &mut rng).unwrap();
            via1 += (s.tables.get(0, 3) == Some(1)) as usize;
            assert!(s.log_prob <= 0.0 && s.entropy >= 0.0);
        }
        assert!((via1 as f64 / 4000.0 - 0.5).abs() < 0.03);
        assert_eq!(
            boltzmann_sample(&even, &topo, 0.0, &mut rng),
            Err(GreedyError::Temperature(0.0))
        );
    }

    #[test]
    fn joint_log_prob_is_sum_of_pairs() {
        let topo = Topology::mini5();
        let layout = PolicyLayout::new(&topo).unwrap();
        let e = emb(&[&[0.1, 0.4], &[-0.3, 0.2], &[0.5, -0.5], &[1.0, 0.3], &[-0.2, -0.9]]);
        let d = embedding_distances(&e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_with_layout(&layout, &d, 0.7, &mut rng).unwrap();
        let lp = layout.log_probs(&d, 0.7);
        let idx = layout.chosen_indices(&s.tables).unwrap();
        let total: f64 = idx.iter().map(|&c| lp[c]).sum();
        assert!((total - s.log_prob).abs() < 1e-12);

        let mut tape = Tape::new();
        let x = tape.leaf(e.to_tensor()).unwrap();
        let item = PolicyItem { node_offset: 0, layout: &layout, tables: &s.tables };
        let (logp, ent) = policy_on_tape(&mut tape, x, &[item], 0.7).unwrap();
        assert_eq!(tape.value(logp).item(), s.log_prob);
        assert!((tape.value(ent).item() - s.entropy).abs() < 1e-12);
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let topo = Topology::mini5();
        let layout = PolicyLayout::new(&topo).unwrap();
        let e = emb(&[&[0.1, 0.4], &[-0.3, 0.2], &[0.5, -0.5], &[1.0, 0.3], &[0.0, 0.0]]);
        let d = embedding_distances(&e).unwrap();
        let tables = greedy_tables(&d, &topo).unwrap();
        let f = |x: &crate::nn::Tensor| -> (f64, Option<crate::nn::Tensor>) {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone()).unwrap();
            let item = PolicyItem { node_offset: 0, layout: &layout, tables: &tables };
            let (lp, ent) = policy_on_tape(&mut tape, xv, &[item], 1.0).unwrap();
            let lp = tape.sum(lp).unwrap();
            let ent = tape.sum(ent).unwrap();
            let tot = tape.add(lp, ent).unwrap();
            (tape.value(tot).item(), Some(tape.grad_of(tot, xv).unwrap()))
        };
        let x0 = e.to_tensor();
        let (_, g) = f(&x0);
        let g = g.unwrap();
        let h = 1e-5;
        for k in 0..x0.len() {
            let mut p = x0.clone();
            p.data_mut()[k] += h;
            let mut m = x0.clone();
            m.data_mut()[k] -= h;
            let num = (f(&p).0 - f(&m).0) / (2.0 * h);
            let a = g.data()[k];
            assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-6) < 1e-4, "{k}: {a} vs {num}");
        }
    }

    #[test]
    fn ring_on_circle_is_greedy() {
        let topo = Topology::from_cables(6, &(0..6).map(|i| (i, (i + 1) % 6, 100.0, 1.0, 10)).collect::<Vec<_>>())
            .unwrap();
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 6.0;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let e = Embeddings::new(6, 2, rows.concat());
        let d = embedding_distances(&e).unwrap();
        assert!(is_greedy_embedding(&d, &topo));
        assert!(detect_loops(&greedy_tables(&d, &topo).unwrap(), &topo).is_empty());
    }

    #[test]
    fn coincident_neighbors_are_not_greedy() {
        let topo = Topology::two_path();
        let e = emb(&[&[0.5, 0.0], &[0.5, 0.0], &[-0.5, 0.0], &[0.0, 0.5]]);
        let d = embedding_distances(&e).unwrap();
        // 0 and 1 coincide, so 1 has no neighbor strictly closer to 0
        assert!(!is_greedy_embedding(&d, &topo));
    }

    #[test]
    fn mutual_pointing_is_a_loop() {
        let topo = Topology::mini5();
        let mut t = crate::eigrp::shortest_path_tables(&topo).unwrap();
        assert!(detect_loops(&t, &topo).is_empty());
        // 3 and 4 point at each other for destination 1
        t.set(3, 1, 4);
        t.set(4, 1, 3);
        assert_eq!(detect_loops(&t, &topo), vec![(3, 1), (4, 1)]);
    }

    #[test]
    fn fluctuation_counts() {
        let topo = Topology::mini5();
        let a = crate::eigrp::shortest_path_tables(&topo).unwrap();
        assert_eq!(fluctuation(&[a.clone(), a.clone(), a.clone()]).unwrap(), 0.0);
        let mut b = a.clone();
        let (u, z) = (3, 1);
        let other = topo.neighbors(u).iter().copied().find(|&v| Some(v) != a.get(u, z)).unwrap();
        b.set(u, z, other);
        // 5 nodes give 20 entries
        assert_eq!(fluctuation(&[a.clone(), b.clone()]).unwrap(), 5.0);
        let mut c = b.clone();
        c.set(1, 3, topo.neighbors(1).iter().copied().find(|&v| Some(v) != b.get(1, 3)).unwrap());
        assert_eq!(fluctuation(&[b.clone(), b.clone(), c]).unwrap(), 2.5);
        assert_eq!(fluctuation(&[a.clone()]), Err(GreedyError::TooFewTables));
        assert_eq!(fluctuation(&[a, RoutingTables::new(4)]), Err(GreedyError::DomainMismatch));
    }

    #[test]
    fn csv_export() {
        let topo = Topology::two_path();
        let d = DistanceMatrix::from_fn(4, |i, j| if i == j { 0.0 } else { 0.25 });
        let csv = routing_csv(&greedy_tables(&d, &topo).unwrap(), &d);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], ROUTING_CSV_HEADER);
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[1], "0,1,1,0.25");
    }
}
