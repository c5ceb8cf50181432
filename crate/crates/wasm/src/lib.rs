//! Browser bindings. Every entry point takes plain strings and bytes and
//! returns a string (JSON or SVG), so the page needs no bundler.

use placer_core::eigrp::{costs_to, link_costs, shortest_path_tables};
use placer_core::experiment::{eval_sequences, embeddings_at_step, EvalConfig};
use placer_core::mpn::MpnConfig;
use placer_core::nn::{read_checkpoint, ParamStore};
use placer_core::ppo::{run_episode, Actor, EpisodeSinks};
use placer_core::svg::embeddings_svg;
use placer_core::traffic::TrafficConfig;
use placer_core::Topology;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Upper bound on simulated steps per call, to keep the page responsive.
pub const MAX_STEPS: usize = 2000;

fn parse_topology(text: &str) -> Result<Topology, String> {
    match text.trim() {
        "mini5" => Ok(Topology::mini5()),
        "two-path" => Ok(Topology::two_path()),
        t => Topology::parse(t).map_err(|e| format!("topology: {e}")),
    }
}

/// Learned weights from checkpoint bytes, or a seeded random encoder when
/// no checkpoint is given.
fn load_model(checkpoint: &[u8], d: usize, seed: u64) -> Result<(ParamStore, MpnConfig), String> {
    if checkpoint.is_empty() {
        if d == 0 {
            return Err("d must be at least 1".into());
        }
        let cfg = MpnConfig::new(d);
        return Ok((cfg.init(seed), cfg));
    }
    let store = read_checkpoint(&mut &checkpoint[..]).map_err(|e| format!("checkpoint: {e}"))?;
    let cfg = MpnConfig::from_store(&store).map_err(|e| format!("checkpoint: {e}"))?;
    Ok((store, cfg))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Route {
    pub u: usize,
    pub z: usize,
    pub next_hop: usize,
    pub cost: u64,
    /// Full hop sequence from `u` to `z`.
    pub path: Vec<usize>,
}

/// Shortest-path next hops for every ordered pair, as a JSON array.
#[wasm_bindgen]
pub fn eigrp_routes(topology: &str) -> Result<String, String> {
    let topo = parse_topology(topology)?;
    let tables = shortest_path_tables(&topo).map_err(|e| e.to_string())?;
    let costs = link_costs(&topo);
    let n = topo.num_nodes();
    let mut routes = Vec::new();
    for z in 0..n {
        let to_z = costs_to(&topo, &costs, z);
        for u in (0..n).filter(|&u| u != z) {
            let mut path = vec![u];
            while *path.last().unwrap() != z && path.len() <= n {
                path.push(tables.get(*path.last().unwrap(), z).expect("complete tables"));
            }
            routes.push(Route { u, z, next_hop: path[1], cost: to_z[u], path });
        }
    }
    serde_json::to_string(&routes).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SimOptions {
    /// `eigrp` or `learned`.
    pub policy: String,
    pub load_factor: f64,
    pub seed: u64,
    pub horizon: usize,
    pub step_ms: f64,
    /// Encoder size when no checkpoint is supplied.
    pub d: usize,
    pub zero_telemetry: bool,
    /// Demand pairs `[src, dst]`; empty means all pairs.
    pub pairs: Vec<(usize, usize)>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            policy: "eigrp".into(),
            load_factor: 1.5,
            seed: 0,
            horizon: 200,
            step_ms: 5.0,
            d: 2,
            zero_telemetry: false,
            pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SimResult {
    pub goodput_mb: f64,
    pub avg_delay_ms: f64,
    pub drop_pct: f64,
    pub fluctuation_pct: f64,
    /// Megabytes delivered in each step.
    pub step_goodput_mb: Vec<f64>,
    /// Entries of the routing table that changed at each step boundary.
    pub step_changes: Vec<usize>,
}

/// Runs one held-out episode and reports its metrics and per-step series.
/// `options` is a JSON object with any subset of the `SimOptions` fields.
#[wasm_bindgen]
pub fn simulate(topology: &str, options: &str, checkpoint: &[u8]) -> Result<String, String> {
    let topo = parse_topology(topology)?;
    let opts: SimOptions = if options.trim().is_empty() {
        SimOptions::default()
    } else {
        serde_json::from_str(options).map_err(|e| format!("options: {e}"))?
    };
    if opts.horizon == 0 || opts.horizon > MAX_STEPS {
        return Err(format!("horizon must be in 1..={MAX_STEPS}"));
    }
    let eval = EvalConfig {
        episodes: 1,
        horizon: opts.horizon,
        step_ms: opts.step_ms,
        traffic: TrafficConfig {
            load_factor: opts.load_factor,
            pairs: (!opts.pairs.is_empty()).then(|| opts.pairs.clone()),
            ..TrafficConfig::default()
        },
        workers: 1,
    };
    let seq = eval_sequences(&topo, &eval, opts.seed).map_err(|e| e.to_string())?.remove(0);
    let static_tables;
    let model;
    let mut actor = match opts.policy.as_str() {
        "eigrp" => {
            static_tables = shortest_path_tables(&topo).map_err(|e| e.to_string())?;
            Actor::Static(&static_tables)
        }
        "learned" => {
            model = load_model(checkpoint, opts.d, opts.seed)?;
            Actor::Greedy { store: &model.0, cfg: &model.1, zero_telemetry: opts.zero_telemetry }
        }
        other => return Err(format!("unknown policy `{other}`")),
    };
    let run = run_episode(&topo, &seq, opts.horizon, opts.step_ms, &mut actor, &mut EpisodeSinks::default())
        .map_err(|e| e.to_string())?;
    let step_changes = run
        .tables
        .windows(2)
        .map(|w| w[0].entries().zip(w[1].entries()).filter(|(a, b)| a.0 != a.1 && a.2 != b.2).count())
        .collect();
    let result = SimResult {
        goodput_mb: run.stats.goodput_mb,
        avg_delay_ms: run.stats.avg_delay_ms,
        drop_pct: run.stats.drop_pct,
        fluctuation_pct: run.fluctuation_pct,
        step_goodput_mb: run.rewards,
        step_changes,
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

/// SVG of the node embeddings at `step` of a held-out episode driven by
/// the encoder's own greedy routing.
#[wasm_bindgen]
pub fn embedding_svg(topology: &str, checkpoint: &[u8], d: usize, seed: u64, step: usize) -> Result<String, String> {
    let topo = parse_topology(topology)?;
    let (store, cfg) = load_model(checkpoint, d, seed)?;
    let horizon = step + 1;
    if horizon > MAX_STEPS {
        return Err(format!("step must be below {MAX_STEPS}"));
    }
    let eval = EvalConfig { episodes: 1, horizon, workers: 1, ..EvalConfig::default() };
    let seq = eval_sequences(&topo, &eval, seed).map_err(|e| e.to_string())?.remove(0);
    let emb = embeddings_at_step(&store, &cfg, &topo, &seq, horizon, eval.step_ms, step).map_err(|e| e.to_string())?;
    embeddings_svg(&emb, &topo).map_err(|e| e.to_string())
}
