//! Evaluation protocol: held-out traffic, per-episode metrics, interquartile
//! means and fingerprinted reports.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eigrp::{shortest_path_tables, EigrpError};
use crate::greedy::{embedding_distances, greedy_tables};
use crate::mpn::{encode, Embeddings, MpnConfig};
use crate::nn::ParamStore;
use crate::par::{default_workers, par_map};
use crate::ppo::{eval_seed, run_episode, Actor, EpisodeSinks, PpoError};
use crate::sim::{Simulator, Telemetry};
use crate::state::{build_state_graph, StepContext};
use crate::topology::Topology;
use crate::traffic::{generate_traffic, TrafficConfig, TrafficSequence};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("interquartile mean needs at least 4 values, got {0}")]
    TooFewValues(usize),
    #[error("need at least one evaluation episode")]
    NoEpisodes,
    #[error("step index {step} outside horizon {horizon}")]
    StepIndex { step: usize, horizon: usize },
    #[error("checkpoint does not fit the topology: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Run(#[from] PpoError),
    #[error(transparent)]
    Eigrp(#[from] EigrpError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub goodput_mb: f64,
    pub avg_delay_ms: f64,
    pub drop_pct: f64,
    pub fluctuation_pct: f64,
}

/// Routing policy under evaluation.
#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    Learned { store: &'a ParamStore, cfg: &'a MpnConfig, zero_telemetry: bool },
    Eigrp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub step_ms: f64,
    pub traffic: TrafficConfig,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 30,
            horizon: 400,
            step_ms: 5.0,
            traffic: TrafficConfig::default(),
            workers: default_workers(),
        }
    }
}

impl EvalConfig {
    pub fn episode_traffic(&self) -> TrafficConfig {
        TrafficConfig { horizon_ms: self.horizon as f64 * self.step_ms, ..self.traffic.clone() }
    }

    pub fn to_text(&self) -> String {
        format!(
            "episodes={}\nhorizon={}\nstep_ms={}\n{}",
            self.episodes,
            self.horizon,
            self.step_ms,
            self.episode_traffic().to_text()
        )
    }
}

/// The held-out sequences for evaluation `seed`.
pub fn eval_sequences(
    topo: &Topology,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<TrafficSequence>, ExperimentError> {
    let traffic = cfg.episode_traffic();
    (0..cfg.episodes as u64)
        .map(|j| generate_traffic(topo, eval_seed(seed, j), &traffic).map_err(|e| PpoError::from(e).into()))
        .collect()
}

/// One metrics row per sequence; learned policies decode greedily.
pub fn run_eval(
    policy: EvalPolicy<'_>,
    topo: &Topology,
    sequences: &[TrafficSequence],
    cfg: &EvalConfig,
) -> Result<Vec<Metrics>, ExperimentError> {
    if sequences.is_empty() {
        return Err(ExperimentError::NoEpisodes);
    }
    let static_tables = match policy {
        EvalPolicy::Eigrp => Some(shortest_path_tables(topo)?),
        EvalPolicy::Learned { store, cfg: mpn, .. } => {
            mpn.check(store).map_err(|e| ExperimentError::Mismatch(e.to_string()))?;
            None
        }
    };
    let runs = par_map(sequences, cfg.workers, |seq| {
        let mut actor = match (&policy, &static_tables) {
            (_, Some(t)) => Actor::Static(t),
            (EvalPolicy::Learned { store, cfg: mpn, zero_telemetry }, None) => {
                Actor::Greedy { store, cfg: mpn, zero_telemetry: *zero_telemetry }
            }
            (EvalPolicy::Eigrp, None) => unreachable!("eigrp tables computed above"),
        };
        run_episode(topo, seq, cfg.horizon, cfg.step_ms, &mut actor, &mut EpisodeSinks::default())
    });
    runs.into_iter()
        .map(|r| {
            let r = r?;
            Ok(Metrics {
                goodput_mb: r.stats.goodput_mb,
                avg_delay_ms: r.stats.avg_delay_ms,
                drop_pct: r.stats.drop_pct,
                fluctuation_pct: r.fluctuation_pct,
            })
        })
        .collect()
}

/// Mean after dropping the lowest and highest quarter (counts rounded down).
pub fn aggregate_iqm(values: &[f64]) -> Result<f64, ExperimentError> {
    if values.len() < 4 {
        return Err(ExperimentError::TooFewValues(values.len()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 4;
    let mid = &v[k..v.len() - k];
    // offsets from the smallest kept value, so a constant list is exact
    let base = mid[0];
    Ok(base + mid.iter().map(|x| x - base).sum::<f64>() / mid.len() as f64)
}

/// First 16 hex digits of the SHA-256 of a canonical config rendering.
pub fn config_fingerprint(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub seed: u64,
    pub episode: usize,
    pub metrics: Metrics,
}

/// Raw per-seed, per-episode rows plus their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub label: String,
    pub fingerprint: String,
    pub rows: Vec<ReportRow>,
    pub iqm: Metrics,
}

pub const REPORT_HEADER: &str = "label,fingerprint,seed,episode,goodput_mb,avg_delay_ms,drop_pct,fluctuation_pct";

impl ExperimentReport {
    pub fn new(label: &str, config_text: &str, rows: Vec<ReportRow>) -> Result<Self, ExperimentError> {
        let iqm = aggregate_rows(&rows)?;
        Ok(Self { label: label.into(), fingerprint: config_fingerprint(config_text), rows, iqm })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                self.label,
                self.fingerprint,
                r.seed,
                r.episode,
                m.goodput_mb,
                m.avg_delay_ms,
                m.drop_pct,
                m.fluctuation_pct
            );
        }
        s
    }

    /// One line per metric: `metric,iqm`.
    pub fn summary_csv(&self) -> String {
        format!(
            "label,fingerprint,metric,iqm\n{l},{f},goodput_mb,{}\n{l},{f},avg_delay_ms,{}\n{l},{f},drop_pct,{}\n{l},{f},fluctuation_pct,{}\n",
            self.iqm.goodput_mb,
            self.iqm.avg_delay_ms,
            self.iqm.drop_pct,
            self.iqm.fluctuation_pct,
            l = self.label,
            f = self.fingerprint,
        )
    }
}

/// Per-seed means aggregated by IQM across seeds when there are at least 4
/// seeds; otherwise IQM across all episode rows.
pub fn aggregate_rows(rows: &[ReportRow]) -> Result<Metrics, ExperimentError> {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed: Vec<Metrics> = if seeds.len() >= 4 {
        seeds
            .iter()
            .map(|&s| {
                let rs: Vec<&Metrics> = rows.iter().filter(|r| r.seed == s).map(|r| &r.metrics).collect();
                let n = rs.len() as f64;
                Metrics {
                    goodput_mb: rs.iter().map(|m| m.goodput_mb).sum::<f64>() / n,
                    avg_delay_ms: rs.iter().map(|m| m.avg_delay_ms).sum::<f64>() / n,
                    drop_pct: rs.iter().map(|m| m.drop_pct).sum::<f64>() / n,
                    fluctuation_pct: rs.iter().map(|m| m.fluctuation_pct).sum::<f64>() / n,
                }
            })
            .collect()
    } else {
        rows.iter().map(|r| r.metrics).collect()
    };
    let col = |f: fn(&Metrics) -> f64| aggregate_iqm(&per_seed.iter().map(f).collect::<Vec<_>>());
    Ok(Metrics {
        goodput_mb: col(|m| m.goodput_mb)?,
        avg_delay_ms: col(|m| m.avg_delay_ms)?,
        drop_pct: col(|m| m.drop_pct)?,
        fluctuation_pct: col(|m| m.fluctuation_pct)?,
    })
}

pub const SEEDS_HEADER: &str = "seed,goodput_mb,fluctuation_pct";

/// Goodput against fluctuation, one row per seed (episode means).
pub fn seeds_csv(rows: &[ReportRow]) -> String {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut s = String::from(SEEDS_HEADER);
    s.push('\n');
    for seed in seeds {
        let rs: Vec<&Metrics> = rows.iter().filter(|r| r.seed == seed).map(|r| &r.metrics).collect();
        let n = rs.len() as f64;
        let g = rs.iter().map(|m| m.goodput_mb).sum::<f64>() / n;
        let f = rs.iter().map(|m| m.fluctuation_pct).sum::<f64>() / n;
        let _ = writeln!(s, "{seed},{g},{f}");
    }
    s
}

/// Embeddings of the state observed at `step` while routing `traffic`
/// greedily with the given parameters.
pub fn embeddings_at_step(
    store: &ParamStore,
    mpn: &MpnConfig,
    topo: &Topology,
    traffic: &TrafficSequence,
    horizon: usize,
    step_ms: f64,
    step: usize,
) -> Result<Embeddings, ExperimentError> {
    if step >= horizon {
        return Err(ExperimentError::StepIndex { step, horizon });
    }
    mpn.check(store).map_err(|e| ExperimentError::Mismatch(e.to_string()))?;
    let run = |e: PpoError| ExperimentError::Run(e);
    let mut sim = Simulator::new(topo, traffic);
    let mut tel = Telemetry::zeros(topo.num_nodes(), topo.num_links());
    let mean_step_injected = traffic.total_bytes() as f64 / horizon as f64;
    for s in 0..=step {
        let ctx = StepContext { step_index: s, horizon, step_ms, mean_step_injected };
        let g = build_state_graph(topo, &tel, &ctx).map_err(|e| run(e.into()))?;
        let emb = encode(&g, store, mpn).map_err(|e| run(e.into()))?;
        if s == step {
            return Ok(emb);
        }
        let dist = embedding_distances(&emb).map_err(|e| run(e.into()))?;
        let tables = greedy_tables(&dist, topo).map_err(|e| run(e.into()))?;
        sim.install_routing(tables).map_err(|e| run(e.into()))?;
        tel = sim.simulate_step(step_ms).map_err(|e| run(e.into()))?.0;
    }
    unreachable!("loop returns at the requested step")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::TrafficSequence;

    fn small_eval() -> EvalConfig {
        EvalConfig { episodes: 4, horizon: 20, workers: 2, ..EvalConfig::default() }
    }

    #[test]
    fn iqm_examples() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(aggregate_iqm(&v).unwrap(), 4.5);
        assert_eq!(aggregate_iqm(&[2.5; 7]).unwrap(), 2.5);
        assert_eq!(aggregate_iqm(&[0.0, 0.0, 0.0, 100.0]).unwrap(), 0.0);
        assert_eq!(aggregate_iqm(&[8.0, 1.0, 5.0, 3.0, 7.0, 2.0, 6.0, 4.0]).unwrap(), 4.5);
        assert!(matches!(aggregate_iqm(&[1.0, 2.0, 3.0]), Err(ExperimentError::TooFewValues(3))));
        // 5 values trim one per side
        assert_eq!(aggregate_iqm(&[100.0, 1.0, 2.0, 3.0, -100.0]).unwrap(), 2.0);
    }

    #[test]
    fn eigrp_is_static() {
        let topo = Topology::mini5();
        let cfg = small_eval();
        let seqs = eval_sequences(&topo, &cfg, 1).unwrap();
        let m = run_eval(EvalPolicy::Eigrp, &topo, &seqs, &cfg).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.iter().all(|m| m.fluctuation_pct == 0.0 && m.goodput_mb > 0.0));
        assert!(m.iter().all(|m| (0.0..=100.0).contains(&m.drop_pct)));
    }

    #[test]
    fn zero_traffic_episode() {
        let topo = Topology::mini5();
        let cfg = small_eval();
        let mpn = MpnConfig::new(2);
        let store = mpn.init(0);
        let policy = EvalPolicy::Learned { store: &store, cfg: &mpn, zero_telemetry: false };
        let m = run_eval(policy, &topo, &[TrafficSequence::empty(0)], &cfg).unwrap();
        assert_eq!((m[0].goodput_mb, m[0].drop_pct), (0.0, 0.0));
        assert!(run_eval(policy, &topo, &[], &cfg).is_err());
    }

    #[test]
    fn learned_eval_is_deterministic_and_checked() {
        let topo = Topology::mini5();
        let cfg = small_eval();
        let seqs = eval_sequences(&topo, &cfg, 2).unwrap();
        let mpn = MpnConfig::new(2);
        let store = mpn.init(5);
        let policy = EvalPolicy::Learned { store: &store, cfg: &mpn, zero_telemetry: false };
        let a = run_eval(policy, &topo, &seqs, &cfg).unwrap();
        let b = run_eval(policy, &topo, &seqs, &EvalConfig { workers: 1, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        let wrong = MpnConfig::new(3);
        let bad = EvalPolicy::Learned { store: &store, cfg: &wrong, zero_telemetry: false };
        assert!(matches!(run_eval(bad, &topo, &seqs, &cfg), Err(ExperimentError::Mismatch(_))));
    }

    #[test]
    fn report_fingerprint_and_aggregate() {
        let rows: Vec<ReportRow> = (0..8)
            .map(|i| ReportRow {
                seed: i as u64,
                episode: 0,
                metrics: Metrics { goodput_mb: (i + 1) as f64, ..Metrics::default() },
            })
            .collect();
        let r = ExperimentReport::new("x", "a=1\n", rows.clone()).unwrap();
        assert_eq!(r.iqm.goodput_mb, 4.5);
        assert_eq!(r.fingerprint, config_fingerprint("a=1\n"));
        assert_ne!(r.fingerprint, config_fingerprint("a=2\n"));
        assert_eq!(r.fingerprint.len(), 16);
        assert_eq!(aggregate_rows(&r.rows).unwrap(), r.iqm);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.lines().nth(1).unwrap().starts_with(&format!("x,{},0,0,1,", r.fingerprint)));
        assert_eq!(seeds_csv(&rows).lines().count(), 9);
    }

    #[test]
    fn embeddings_at_step_bounds() {
        let topo = Topology::mini5();
        let mpn = MpnConfig::new(2);
        let store = mpn.init(0);
        let seq = eval_sequences(&topo, &small_eval(), 0).unwrap().remove(0);
        let e = embeddings_at_step(&store, &mpn, &topo, &seq, 20, 5.0, 3).unwrap();
        assert_eq!((e.num_nodes, e.dim), (5, 2));
        assert!(matches!(
            embeddings_at_step(&store, &mpn, &topo, &seq, 20, 5.0, 20),
            Err(ExperimentError::StepIndex { .. })
        ));
    }
}
