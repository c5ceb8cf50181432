//! Running one episode under a policy.

use std::io::Write;

use rand_chacha::ChaCha8Rng;

use super::PpoError;
use crate::greedy::{embedding_distances, fluctuation, greedy_tables, sample_with_layout, PolicyLayout};
use crate::mpn::{encode, value_head, MpnConfig};
use crate::nn::ParamStore;
use crate::sim::{EpisodeStats, Simulator, Telemetry, TRACE_HEADER};
use crate::state::{build_state_graph, StateGraph, StepContext, STATE_CSV_HEADER};
use crate::tables::RoutingTables;
use crate::topology::Topology;
use crate::traffic::TrafficSequence;

/// One decision step recorded for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateGraph,
    pub action: RoutingTables,
    pub log_prob: f64,
    pub value: f64,
    /// Goodput of the step in MB.
    pub reward: f64,
    pub done: bool,
}

/// How routing tables are chosen at each step.
pub enum Actor<'a> {
    /// Boltzmann sampling; records transitions.
    Sample {
        store: &'a ParamStore,
        cfg: &'a MpnConfig,
        layout: &'a PolicyLayout,
        tau: f64,
        rng: ChaCha8Rng,
    },
    /// Greedy decoding, optionally blind to telemetry.
    Greedy { store: &'a ParamStore, cfg: &'a MpnConfig, zero_telemetry: bool },
    /// The same tables throughout.
    Static(&'a RoutingTables),
}

/// Optional per-step CSV sinks.
#[derive(Default)]
pub struct EpisodeSinks<'a> {
    pub trace: Option<&'a mut dyn Write>,
    pub state: Option<&'a mut dyn Write>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub stats: EpisodeStats,
    pub fluctuation_pct: f64,
    pub rewards: Vec<f64>,
    pub tables: Vec<RoutingTables>,
    pub transitions: Vec<Transition>,
}

/// Simulates `horizon` steps of `step_ms`, choosing tables from the state
/// observed after the previous step (an idle network before the first).
pub fn run_episode(
    topo: &Topology,
    traffic: &TrafficSequence,
    horizon: usize,
    step_ms: f64,
    actor: &mut Actor<'_>,
    sinks: &mut EpisodeSinks<'_>,
) -> Result<EpisodeRun, PpoError> {
    let mut sim = Simulator::new(topo, traffic);
    let mut tel = Telemetry::zeros(topo.num_nodes(), topo.num_links());
    let mean_step_injected = traffic.total_bytes() as f64 / horizon.max(1) as f64;
    let mut run = EpisodeRun {
        stats: EpisodeStats::default(),
        fluctuation_pct: 0.0,
        rewards: Vec::with_capacity(horizon),
        tables: Vec::with_capacity(horizon),
        transitions: Vec::new(),
    };
    if let Some(w) = sinks.trace.as_mut() {
        writeln!(w, "{TRACE_HEADER}")?;
    }
    if let Some(w) = sinks.state.as_mut() {
        writeln!(w, "{STATE_CSV_HEADER}")?;
    }
    for step in 0..horizon {
        let ctx = StepContext { step_index: step, horizon, step_ms, mean_step_injected };
        let mut recorded = None;
        let tables = match actor {
            Actor::Static(t) => (*t).clone(),
            Actor::Greedy { store, cfg, zero_telemetry } => {
                let mut g = build_state_graph(topo, &tel, &ctx)?;
                if *zero_telemetry {
                    g.zero_telemetry();
                }
                if let Some(w) = sinks.state.as_mut() {
                    w.write_all(g.to_csv_block(step).as_bytes())?;
                }
                let dist = embedding_distances(&encode(&g, store, cfg)?)?;
                greedy_tables(&dist, topo)?
            }
            Actor::Sample { store, cfg, layout, tau, rng } => {
                let g = build_state_graph(topo, &tel, &ctx)?;
                if let Some(w) = sinks.state.as_mut() {
                    w.write_all(g.to_csv_block(step).as_bytes())?;
                }
                let dist = embedding_distances(&encode(&g, store, cfg)?)?;
                let sample = sample_with_layout(layout, &dist, *tau, rng)?;
                let value = value_head(&g, store, cfg)?;
                let tables = sample.tables.clone();
                recorded = Some((g, sample, value));
                tables
            }
        };
        sim.install_routing(tables.clone())?;
        let (next_tel, reward) = sim.simulate_step(step_ms)?;
        if let Some(w) = sinks.trace.as_mut() {
            next_tel.write_trace_rows(step, w)?;
        }
        if let Some((state, sample, value)) = recorded {
            run.transitions.push(Transition {
                state,
                action: sample.tables,
                log_prob: sample.log_prob,
                value,
                reward: reward.goodput_mb,
                done: step + 1 == horizon,
            });
        }
        run.rewards.push(reward.goodput_mb);
        run.tables.push(tables);
        tel = next_tel;
    }
    run.stats = sim.stats();
    if run.tables.len() >= 2 {
        run.fluctuation_pct = fluctuation(&run.tables)?;
    }
    Ok(run)
}
