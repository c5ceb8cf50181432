//! Message passing encoder and critic.
//!
//! Node states start from a linear map of the node features. Each round
//! computes a message per directed edge from `[h_src, h_dst, edge features]`,
//! averages incoming messages per node, and adds an MLP of `[h_v, mean]` to
//! `h_v`. A final linear head produces `d`-dimensional embeddings. The critic
//! mean-pools its own final node states, appends the global features and
//! applies a two-layer MLP.

use crate::nn::{
    dense_forward, init_params, Activation, NnError, ParamSpec, ParamStore, Tape, Tensor, Var,
};
use crate::state::{StateGraph, EDGE_FEATURES, GLOBAL_FEATURES, NODE_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub out_dim: usize,
    /// Critic reuses the embedding trunk instead of its own.
    pub shared_trunk: bool,
}

impl MpnConfig {
    pub fn new(out_dim: usize) -> Self {
        Self { layers: 4, hidden: 32, out_dim, shared_trunk: false }
    }

    fn trunk_specs(&self, prefix: &str, specs: &mut Vec<ParamSpec>) {
        let h = self.hidden;
        specs.push(ParamSpec::weight(format!("{prefix}enc.w"), NODE_FEATURES, h));
        specs.push(ParamSpec::bias(format!("{prefix}enc.b"), h));
        for l in 0..self.layers {
            specs.push(ParamSpec::weight(format!("{prefix}msg{l}.w1"), 2 * h + EDGE_FEATURES, h));
            specs.push(ParamSpec::bias(format!("{prefix}msg{l}.b1"), h));
            specs.push(ParamSpec::weight(format!("{prefix}msg{l}.w2"), h, h));
            specs.push(ParamSpec::bias(format!("{prefix}msg{l}.b2"), h));
            specs.push(ParamSpec::weight(format!("{prefix}upd{l}.w1"), 2 * h, h));
            specs.push(ParamSpec::bias(format!("{prefix}upd{l}.b1"), h));
            specs.push(ParamSpec::weight(format!("{prefix}upd{l}.w2"), h, h));
            specs.push(ParamSpec::bias(format!("{prefix}upd{l}.b2"), h));
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let h = self.hidden;
        let mut specs = Vec::new();
        self.trunk_specs("", &mut specs);
        specs.push(ParamSpec::weight("head.w", h, self.out_dim));
        specs.push(ParamSpec::bias("head.b", self.out_dim));
        if !self.shared_trunk {
            self.trunk_specs("critic.", &mut specs);
        }
        specs.push(ParamSpec::weight("val.w1", h + GLOBAL_FEATURES, h));
        specs.push(ParamSpec::bias("val.b1", h));
        specs.push(ParamSpec::weight("val.w2", h, 1));
        specs.push(ParamSpec::bias("val.b2", 1));
        specs
    }

    pub fn init(&self, seed: u64) -> ParamStore {
        init_params(&self.param_specs(), seed)
    }

    /// Checks that `store` holds every parameter with the expected shape.
    pub fn check(&self, store: &ParamStore) -> Result<(), NnError> {
        for spec in self.param_specs() {
            let id = store.expect_id(&spec.name)?;
            if store.value(id).shape() != spec.shape.as_slice() {
                return Err(NnError::Shape(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    spec.name,
                    store.value(id).shape(),
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    /// Recovers the configuration stored in a checkpoint.
    pub fn from_store(store: &ParamStore) -> Result<Self, NnError> {
        let head = store.value(store.expect_id("head.w")?);
        let hidden = head.rows();
        let layers = (0..).take_while(|l| store.id(&format!("msg{l}.w1")).is_some()).count();
        let cfg = Self {
            layers,
            hidden,
            out_dim: head.cols(),
            shared_trunk: store.id("critic.enc.w").is_none(),
        };
        cfg.check(store)?;
        Ok(cfg)
    }
}

/// Latent node embeddings, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub num_nodes: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Embeddings {
    pub fn new(num_nodes: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), num_nodes * dim, "embedding size");
        Self { num_nodes, dim, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.num_nodes, self.dim, self.data.clone()).expect("embedding size")
    }
}

/// Disjoint union of state graphs, evaluated in one pass.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub num_nodes: usize,
    pub num_graphs: usize,
    /// First node of each graph, plus the total.
    pub node_offsets: Vec<usize>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub graph_of_node: Vec<usize>,
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub global_features: Tensor,
}

impl GraphBatch {
    pub fn new(graphs: &[&StateGraph]) -> Result<Self, NnError> {
        let mut b = GraphBatch {
            num_nodes: 0,
            num_graphs: graphs.len(),
            node_offsets: vec![0],
            src: Vec::new(),
            dst: Vec::new(),
            graph_of_node: Vec::new(),
            node_features: Tensor::zeros(&[0]),
            edge_features: Tensor::zeros(&[0]),
            global_features: Tensor::zeros(&[0]),
        };
        let (mut nf, mut ef, mut gf) = (Vec::new(), Vec::new(), Vec::new());
        for (k, g) in graphs.iter().enumerate() {
            if g.node_features.len() != g.num_nodes * NODE_FEATURES
                || g.edge_features.len() != g.edges.len() * EDGE_FEATURES
                || g.global_features.len() != GLOBAL_FEATURES
            {
                return Err(NnError::Shape(format!("state graph {k} has inconsistent features")));
            }
            if g.edges.iter().any(|&(s, d)| s >= g.num_nodes || d >= g.num_nodes) {
                return Err(NnError::Shape(format!("state graph {k} has an out-of-range edge")));
            }
            let base = b.num_nodes;
            for &(s, d) in &g.edges {
                b.src.push(base + s);
                b.dst.push(base + d);
            }
            b.graph_of_node.extend(std::iter::repeat_n(k, g.num_nodes));
            b.num_nodes += g.num_nodes;
            b.node_offsets.push(b.num_nodes);
            nf.extend_from_slice(&g.node_features);
            ef.extend_from_slice(&g.edge_features);
            gf.extend_from_slice(&g.global_features);
        }
        b.node_features = Tensor::matrix(b.num_nodes, NODE_FEATURES, nf)?;
        b.edge_features = Tensor::matrix(b.src.len(), EDGE_FEATURES, ef)?;
        b.global_features = Tensor::matrix(graphs.len(), GLOBAL_FEATURES, gf)?;
        Ok(b)
    }
}

fn p(tape: &mut Tape, store: &ParamStore, name: &str) -> Result<Var, NnError> {
    Ok(tape.param(store, store.expect_id(name)?))
}

fn mlp2(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    x: Var,
) -> Result<Var, NnError> {
    let (w1, b1) = (p(tape, store, &format!("{prefix}.w1"))?, p(tape, store, &format!("{prefix}.b1"))?);
    let (w2, b2) = (p(tape, store, &format!("{prefix}.w2"))?, p(tape, store, &format!("{prefix}.b2"))?);
    let hidden = dense_forward(tape, x, w1, b1, Activation::LeakyRelu)?;
    dense_forward(tape, hidden, w2, b2, Activation::Linear)
}

/// Final node states (`N x hidden`) of the trunk with the given prefix.
fn trunk(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &MpnConfig,
    prefix: &str,
    batch: &GraphBatch,
) -> Result<Var, NnError> {
    let x = tape.leaf(batch.node_features.clone())?;
    let e = tape.leaf(batch.edge_features.clone())?;
    let (w, b) = (p(tape, store, &format!("{prefix}enc.w"))?, p(tape, store, &format!("{prefix}enc.b"))?);
    let mut h = dense_forward(tape, x, w, b, Activation::Linear)?;
    for l in 0..cfg.layers {
        let hs = tape.gather_rows(h, &batch.src)?;
        let hd = tape.gather_rows(h, &batch.dst)?;
        let input = tape.concat_cols(&[hs, hd, e])?;
        let msg = mlp2(tape, store, &format!("{prefix}msg{l}"), input)?;
        let msg = tape.activation(msg, Activation::LeakyRelu)?;
        let agg = tape.scatter_mean(msg, &batch.dst, batch.num_nodes)?;
        let cat = tape.concat_cols(&[h, agg])?;
        let delta = mlp2(tape, store, &format!("{prefix}upd{l}"), cat)?;
        h = tape.add(h, delta)?;
    }
    Ok(h)
}

/// Raw embeddings (`N x d`) for every node of the batch.
pub fn encode_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &MpnConfig,
    batch: &GraphBatch,
) -> Result<Var, NnError> {
    let h = trunk(tape, store, cfg, "", batch)?;
    let (w, b) = (p(tape, store, "head.w")?, p(tape, store, "head.b")?);
    dense_forward(tape, h, w, b, Activation::Linear)
}

/// State values (`B x 1`), one per graph of the batch.
pub fn value_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &MpnConfig,
    batch: &GraphBatch,
) -> Result<Var, NnError> {
    let prefix = if cfg.shared_trunk { "" } else { "critic." };
    let h = trunk(tape, store, cfg, prefix, batch)?;
    let pooled = tape.scatter_mean(h, &batch.graph_of_node, batch.num_graphs)?;
    let glob = tape.leaf(batch.global_features.clone())?;
    let input = tape.concat_cols(&[pooled, glob])?;
    let (w1, b1) = (p(tape, store, "val.w1")?, p(tape, store, "val.b1")?);
    let (w2, b2) = (p(tape, store, "val.w2")?, p(tape, store, "val.b2")?);
    let hidden = dense_forward(tape, input, w1, b1, Activation::LeakyRelu)?;
    dense_forward(tape, hidden, w2, b2, Activation::Linear)
}

pub fn encode(g: &StateGraph, store: &ParamStore, cfg: &MpnConfig) -> Result<Embeddings, NnError> {
    let batch = GraphBatch::new(&[g])?;
    let mut tape = Tape::new();
    let out = encode_on_tape(&mut tape, store, cfg, &batch)?;
    Ok(Embeddings::new(g.num_nodes, cfg.out_dim, tape.value(out).data().to_vec()))
}

pub fn value_head(g: &StateGraph, store: &ParamStore, cfg: &MpnConfig) -> Result<f64, NnError> {
    let batch = GraphBatch::new(&[g])?;
    let mut tape = Tape::new();
    let v = value_on_tape(&mut tape, store, cfg, &batch)?;
    Ok(tape.value(v).item())
}
