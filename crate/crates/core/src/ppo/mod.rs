//! On-policy training: rollouts through the simulator, GAE and clipped PPO
//! updates of the encoder and critic.

mod gae;
mod rollout;
mod update;

use std::fmt::Write as _;
use std::ops::Range;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use gae::{compute_gae, normalize_advantages};
pub use rollout::{run_episode, Actor, EpisodeRun, EpisodeSinks, Transition};
pub use update::{chunk_loss_on_tape, minibatch_gradients, ppo_update, ChunkLoss, UpdateStats};

use crate::greedy::{GreedyError, PolicyLayout};
use crate::mpn::MpnConfig;
use crate::nn::{NnError, ParamStore};
use crate::par::{default_workers, par_map};
use crate::sim::{EpisodeStats, SimError};
use crate::state::StateError;
use crate::topology::Topology;
use crate::traffic::{generate_traffic, TrafficConfig, TrafficError, TrafficSequence};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Greedy(#[from] GreedyError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("rollout is empty")]
    EmptyRollout,
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub unique_sequences: usize,
    pub repeats: usize,
    pub horizon: usize,
    pub step_ms: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_episodes: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub tau: f64,
    /// Global gradient norm cap applied before each Adam step.
    pub max_grad_norm: Option<f64>,
    pub traffic: TrafficConfig,
    /// Threads for rollouts and gradient chunks; results do not depend on it.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 40,
            episodes_per_iter: 16,
            unique_sequences: 4,
            repeats: 4,
            horizon: 400,
            step_ms: 5.0,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 5,
            minibatch_episodes: 4,
            lr: 3e-4,
            entropy_coef: 1e-3,
            value_coef: 0.5,
            tau: 1.0,
            max_grad_norm: Some(0.5),
            traffic: TrafficConfig::default(),
            workers: default_workers(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let err = |m: &str| Err(PpoError::Config(m.to_string()));
        if self.episodes_per_iter != self.unique_sequences * self.repeats {
            return err("episodes_per_iter must equal unique_sequences x repeats");
        }
        let counts = [
            self.iterations,
            self.episodes_per_iter,
            self.horizon,
            self.epochs,
            self.minibatch_episodes,
            self.workers,
        ];
        if counts.contains(&0) {
            return err("counts must be positive");
        }
        let positive = [self.step_ms, self.gamma, self.lambda, self.clip, self.lr, self.tau];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return err("step_ms, gamma, lambda, clip, lr and tau must be positive");
        }
        if self.gamma > 1.0 || self.lambda > 1.0 {
            return err("gamma and lambda must not exceed 1");
        }
        if [self.entropy_coef, self.value_coef].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return err("loss coefficients must be non-negative");
        }
        if crate::sim::ms_to_ticks(self.step_ms).is_none() {
            return err("step_ms must be a multiple of 0.1 ms");
        }
        self.traffic.validate()?;
        Ok(())
    }

    /// Traffic settings with the horizon matched to the episode length.
    pub fn episode_traffic(&self) -> TrafficConfig {
        TrafficConfig { horizon_ms: self.horizon as f64 * self.step_ms, ..self.traffic.clone() }
    }

    /// `key=value` lines of every knob, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "episodes_per_iter={}", self.episodes_per_iter);
        let _ = writeln!(s, "unique_sequences={}", self.unique_sequences);
        let _ = writeln!(s, "repeats={}", self.repeats);
        let _ = writeln!(s, "horizon={}", self.horizon);
        let _ = writeln!(s, "step_ms={}", self.step_ms);
        let _ = writeln!(s, "gamma={}", self.gamma);
        let _ = writeln!(s, "lambda={}", self.lambda);
        let _ = writeln!(s, "clip={}", self.clip);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "minibatch_episodes={}", self.minibatch_episodes);
        let _ = writeln!(s, "lr={}", self.lr);
        let _ = writeln!(s, "entropy_coef={}", self.entropy_coef);
        let _ = writeln!(s, "value_coef={}", self.value_coef);
        let _ = writeln!(s, "tau={}", self.tau);
        let clip = self.max_grad_norm.map(|c| c.to_string()).unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "max_grad_norm={clip}");
        s.push_str(&self.episode_traffic().to_text());
        s
    }
}

/// Transitions of several episodes with their advantages and returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    /// Transition range of each episode.
    pub episodes: Vec<Range<usize>>,
    /// Normalized over the whole rollout.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub stats: Vec<EpisodeStats>,
    pub fluctuation: Vec<f64>,
}

impl Rollout {
    /// Concatenates episodes and computes GAE.
    pub fn from_runs(runs: Vec<EpisodeRun>, cfg: &TrainConfig) -> Result<Self, PpoError> {
        let mut r = Rollout {
            transitions: vec![],
            episodes: vec![],
            advantages: vec![],
            returns: vec![],
            stats: vec![],
            fluctuation: vec![],
        };
        for run in runs {
            let start = r.transitions.len();
            r.transitions.extend(run.transitions);
            r.episodes.push(start..r.transitions.len());
            r.stats.push(run.stats);
            r.fluctuation.push(run.fluctuation_pct);
        }
        let rewards: Vec<f64> = r.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = r.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = r.transitions.iter().map(|t| t.done).collect();
        let (mut adv, ret) = compute_gae(&rewards, &values, &dones, cfg.gamma, cfg.lambda)?;
        normalize_advantages(&mut adv);
        r.advantages = adv;
        r.returns = ret;
        Ok(r)
    }
}

/// Collects one episode per `(sequence, sampler seed)` pair with Boltzmann
/// exploration.
pub fn collect_rollout(
    store: &ParamStore,
    mpn: &MpnConfig,
    topo: &Topology,
    episodes: &[(TrafficSequence, u64)],
    cfg: &TrainConfig,
) -> Result<Rollout, PpoError> {
    let layout = PolicyLayout::new(topo)?;
    let runs = par_map(episodes, cfg.workers, |(seq, sampler_seed)| {
        let mut actor = Actor::Sample {
            store,
            cfg: mpn,
            layout: &layout,
            tau: cfg.tau,
            rng: ChaCha8Rng::seed_from_u64(*sampler_seed),
        };
        run_episode(topo, seq, cfg.horizon, cfg.step_ms, &mut actor, &mut EpisodeSinks::default())
    });
    Rollout::from_runs(runs.into_iter().collect::<Result<_, _>>()?, cfg)
}

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    pub mean_goodput_mb: f64,
    pub mean_delay_ms: f64,
    pub drop_pct: f64,
    pub fluctuation_pct: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
}

pub const CURVE_HEADER: &str = "iteration,mean_goodput_mb,mean_delay_ms,drop_pct,fluctuation_pct,policy_loss,value_loss,entropy,clip_frac";

impl CurveRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.mean_goodput_mb,
            self.mean_delay_ms,
            self.drop_pct,
            self.fluctuation_pct,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.clip_frac
        )
    }
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_row());
        s.push('\n');
    }
    s
}

/// Training traffic seeds have the top bit clear; evaluation seeds set it.
pub const EVAL_SEED_FLAG: u64 = 1 << 63;

/// Seed of the `index`-th held-out evaluation sequence.
pub fn eval_seed(base: u64, index: u64) -> u64 {
    EVAL_SEED_FLAG | (base.wrapping_mul(1_000_003).wrapping_add(index) & !EVAL_SEED_FLAG)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub store: ParamStore,
    pub curve: Vec<CurveRow>,
}

/// Trains from a fresh initialization. `on_iteration` sees every curve row
/// with the parameters after that iteration's update.
pub fn train(
    topo: &Topology,
    mpn: &MpnConfig,
    cfg: &TrainConfig,
    seed: u64,
    mut on_iteration: impl FnMut(&CurveRow, &ParamStore) -> Result<(), PpoError>,
) -> Result<TrainOutcome, PpoError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = mpn.init(rng.next_u64());
    let layout = PolicyLayout::new(topo)?;
    let traffic_cfg = cfg.episode_traffic();
    let mut curve = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let mut episodes = Vec::with_capacity(cfg.episodes_per_iter);
        for _ in 0..cfg.unique_sequences {
            let seq = generate_traffic(topo, rng.next_u64() & !EVAL_SEED_FLAG, &traffic_cfg)?;
            for _ in 0..cfg.repeats {
                episodes.push((seq.clone(), rng.next_u64()));
            }
        }
        let rollout = collect_rollout(&store, mpn, topo, &episodes, cfg)?;
        let stats = ppo_update(&mut store, mpn, &layout, &rollout, cfg, &mut rng)?;
        let row = CurveRow {
            iteration,
            mean_goodput_mb: mean(rollout.stats.iter().map(|s| s.goodput_mb)),
            mean_delay_ms: mean(rollout.stats.iter().map(|s| s.avg_delay_ms)),
            drop_pct: mean(rollout.stats.iter().map(|s| s.drop_pct)),
            fluctuation_pct: mean(rollout.fluctuation.iter().copied()),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_frac: stats.clip_frac,
        };
        on_iteration(&row, &store)?;
        curve.push(row);
    }
    Ok(TrainOutcome { store, curve })
}

#[cfg(test)]
mod tests;
