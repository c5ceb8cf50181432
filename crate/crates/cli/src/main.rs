use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use placer_core::eigrp::{costs_to, link_costs, shortest_path_tables};
use placer_core::experiment::{
    embeddings_at_step, eval_sequences, run_eval, seeds_csv, EvalConfig, EvalPolicy,
    ExperimentReport, ReportRow,
};
use placer_core::greedy::{embedding_distances, greedy_tables, routing_csv};
use placer_core::mpn::MpnConfig;
use placer_core::nn::{load_checkpoint, save_checkpoint, ParamStore};
use placer_core::ppo::{run_episode, train, Actor, EpisodeSinks, TrainConfig, CURVE_HEADER};
use placer_core::svg::embeddings_svg;
use placer_core::traffic::{load_traffic_config, TrafficConfig, TrafficSequence};
use placer_core::{load_topology, Topology};

#[derive(Parser)]
#[command(name = "placer", version, about = "Telemetry-aware greedy routing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Topology file, or one of the built-ins `mini5` and `two-path`.
    #[arg(long, default_value = "mini5")]
    topology: String,
    /// key=value traffic config.
    #[arg(long)]
    traffic: Option<PathBuf>,
    /// Defaults to the traffic file's `seed`, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 400)]
    horizon: usize,
    #[arg(long = "step-ms", default_value_t = 5.0)]
    step_ms: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Per-link telemetry CSV of one episode.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Per-step state graphs of one episode as CSV.
    #[arg(long = "dump-state")]
    dump_state: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder with PPO.
    Train {
        #[command(flatten)]
        common: Common,
        /// Embedding dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 40)]
        iterations: usize,
        /// Episodes per iteration.
        #[arg(long, default_value_t = 16)]
        episodes: usize,
        /// Repeats of each traffic sequence within an iteration.
        #[arg(long, default_value_t = 4)]
        repeats: usize,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 3e-4)]
        lr: f64,
    },
    /// Evaluate a checkpoint on held-out traffic with greedy decoding.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
        /// Hide telemetry from the encoder.
        #[arg(long)]
        zero_telemetry: bool,
    },
    /// Evaluate a baseline.
    #[command(subcommand)]
    Baseline(Baseline),
    /// Plot the embedding of one step as SVG.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        step: usize,
    },
    /// Write greedy next hops and squared distances of one step as CSV.
    ExportTables {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        step: usize,
    },
    #[command(subcommand)]
    Report(Report),
}

#[derive(Subcommand)]
enum Baseline {
    /// Static shortest paths over composite link costs.
    Eigrp {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
    },
}

#[derive(Subcommand)]
enum Report {
    /// Goodput against fluctuation, one row per checkpoint.
    Seeds {
        #[command(flatten)]
        common: Common,
        /// One checkpoint per training seed, in seed order.
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
    },
}

struct Setup {
    topo: Topology,
    traffic: TrafficConfig,
    seed: u64,
}

impl Common {
    fn setup(&self) -> Result<Setup> {
        let topo = match self.topology.as_str() {
            "mini5" if !Path::new("mini5").exists() => Topology::mini5(),
            "two-path" if !Path::new("two-path").exists() => Topology::two_path(),
            path => load_topology(path).with_context(|| format!("loading topology {path}"))?,
        };
        let (traffic, file_seed) = match &self.traffic {
            Some(p) => {
                let f = load_traffic_config(p)
                    .with_context(|| format!("loading traffic config {}", p.display()))?;
                (f.config, f.seed)
            }
            None => (TrafficConfig::default(), None),
        };
        if self.horizon == 0 {
            bail!("--horizon must be positive");
        }
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(Setup { topo, traffic, seed: self.seed.or(file_seed).unwrap_or(0) })
    }

    fn eval_config(&self, setup: &Setup, episodes: usize) -> EvalConfig {
        let mut cfg = EvalConfig {
            episodes,
            horizon: self.horizon,
            step_ms: self.step_ms,
            traffic: setup.traffic.clone(),
            ..EvalConfig::default()
        };
        if let Some(w) = self.workers {
            cfg.workers = w.max(1);
        }
        cfg
    }

    /// Re-runs one episode with the trace and state sinks attached.
    fn write_episode_files(&self, topo: &Topology, seq: &TrafficSequence, actor: &mut Actor<'_>) -> Result<()> {
        if self.trace.is_none() && self.dump_state.is_none() {
            return Ok(());
        }
        let mut trace = self.trace.as_ref().map(create).transpose()?;
        let mut state = self.dump_state.as_ref().map(create).transpose()?;
        let mut sinks = EpisodeSinks {
            trace: trace.as_mut().map(|w| w as &mut dyn Write),
            state: state.as_mut().map(|w| w as &mut dyn Write),
        };
        run_episode(topo, seq, self.horizon, self.step_ms, actor, &mut sinks)?;
        drop(sinks);
        for w in [trace, state].into_iter().flatten() {
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        Ok(())
    }
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<(ParamStore, MpnConfig)> {
    let store = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let cfg = MpnConfig::from_store(&store).context("checkpoint layout")?;
    Ok((store, cfg))
}

fn report_rows(seed: u64, metrics: Vec<placer_core::experiment::Metrics>) -> Vec<ReportRow> {
    metrics
        .into_iter()
        .enumerate()
        .map(|(episode, metrics)| ReportRow { seed, episode, metrics })
        .collect()
}

fn print_summary(report: &ExperimentReport) {
    let m = &report.iqm;
    println!(
        "{} [{}]: goodput {:.3} MB, delay {:.3} ms, drops {:.2}%, fluctuation {:.2}% (IQM over {} rows)",
        report.label,
        report.fingerprint,
        m.goodput_mb,
        m.avg_delay_ms,
        m.drop_pct,
        m.fluctuation_pct,
        report.rows.len()
    );
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { common, d, iterations, episodes, repeats, tau, lr } => {
            let setup = common.setup()?;
            if d == 0 {
                bail!("--d must be at least 1");
            }
            if repeats == 0 || episodes % repeats != 0 {
                bail!("--episodes must be a multiple of --repeats");
            }
            let mut cfg = TrainConfig {
                iterations,
                episodes_per_iter: episodes,
                unique_sequences: episodes / repeats,
                repeats,
                horizon: common.horizon,
                step_ms: common.step_ms,
                tau,
                lr,
                traffic: setup.traffic.clone(),
                ..TrainConfig::default()
            };
            if let Some(w) = common.workers {
                cfg.workers = w.max(1);
            }
            cfg.validate()?;
            let mpn = MpnConfig::new(d);
            let config_text = format!("seed={}\nd={d}\n{}", setup.seed, cfg.to_text());
            let fingerprint = placer_core::experiment::config_fingerprint(&config_text);
            write(common.out.join("config.txt"), format!("fingerprint={fingerprint}\n{config_text}"))?;
            let ckpt_dir = common.out.join("checkpoints");
            fs::create_dir_all(&ckpt_dir)?;
            let mut curve = create(&common.out.join("curve.csv"))?;
            writeln!(curve, "{CURVE_HEADER}")?;
            let outcome = train(&setup.topo, &mpn, &cfg, setup.seed, |row, store| {
                writeln!(curve, "{}", row.to_csv_row())?;
                curve.flush()?;
                save_checkpoint(store, ckpt_dir.join(format!("iter_{:04}.plcr", row.iteration)))?;
                eprintln!(
                    "iteration {:>3}: goodput {:.3} MB, fluctuation {:.1}%, clip {:.3}",
                    row.iteration, row.mean_goodput_mb, row.fluctuation_pct, row.clip_frac
                );
                Ok(())
            })?;
            drop(curve);
            save_checkpoint(&outcome.store, common.out.join("checkpoint.plcr"))?;
            let eval = common.eval_config(&setup, 1);
            let seq = eval_sequences(&setup.topo, &eval, setup.seed)?.remove(0);
            let mut actor = Actor::Greedy { store: &outcome.store, cfg: &mpn, zero_telemetry: false };
            common.write_episode_files(&setup.topo, &seq, &mut actor)?;
            println!("wrote {}", common.out.join("checkpoint.plcr").display());
        }
        Command::Eval { common, checkpoint, episodes, zero_telemetry } => {
            let setup = common.setup()?;
            let (store, mpn) = load_model(&checkpoint)?;
            let eval = common.eval_config(&setup, episodes);
            let seqs = eval_sequences(&setup.topo, &eval, setup.seed)?;
            let policy = EvalPolicy::Learned { store: &store, cfg: &mpn, zero_telemetry };
            let metrics = run_eval(policy, &setup.topo, &seqs, &eval)?;
            let text = format!(
                "policy=learned\nd={}\nzero_telemetry={zero_telemetry}\nseed={}\n{}",
                mpn.out_dim,
                setup.seed,
                eval.to_text()
            );
            let report = ExperimentReport::new("placer", &text, report_rows(setup.seed, metrics))?;
            write(common.out.join("metrics.csv"), report.to_csv())?;
            write(common.out.join("summary.csv"), report.summary_csv())?;
            let emb = embeddings_at_step(&store, &mpn, &setup.topo, &seqs[0], common.horizon, common.step_ms, 0)?;
            let dist = embedding_distances(&emb)?;
            write(common.out.join("tables.csv"), routing_csv(&greedy_tables(&dist, &setup.topo)?, &dist))?;
            let mut actor = Actor::Greedy { store: &store, cfg: &mpn, zero_telemetry };
            common.write_episode_files(&setup.topo, &seqs[0], &mut actor)?;
            print_summary(&report);
        }
        Command::Baseline(Baseline::Eigrp { common, episodes }) => {
            let setup = common.setup()?;
            let eval = common.eval_config(&setup, episodes);
            let seqs = eval_sequences(&setup.topo, &eval, setup.seed)?;
            let metrics = run_eval(EvalPolicy::Eigrp, &setup.topo, &seqs, &eval)?;
            let text = format!("policy=eigrp\nseed={}\n{}", setup.seed, eval.to_text());
            let report = ExperimentReport::new("eigrp", &text, report_rows(setup.seed, metrics))?;
            write(common.out.join("metrics.csv"), report.to_csv())?;
            write(common.out.join("summary.csv"), report.summary_csv())?;
            let tables = shortest_path_tables(&setup.topo)?;
            let costs = link_costs(&setup.topo);
            let mut csv = String::from("u,z,next_hop,cost\n");
            for z in 0..setup.topo.num_nodes() {
                let to_z = costs_to(&setup.topo, &costs, z);
                for u in (0..setup.topo.num_nodes()).filter(|&u| u != z) {
                    let hop = tables.get(u, z).map(|v| v.to_string()).unwrap_or_default();
                    csv.push_str(&format!("{u},{z},{hop},{}\n", to_z[u]));
                }
            }
            write(common.out.join("tables.csv"), csv)?;
            let mut actor = Actor::Static(&tables);
            common.write_episode_files(&setup.topo, &seqs[0], &mut actor)?;
            print_summary(&report);
        }
        Command::ExportEmbeddings { common, checkpoint, step } => {
            let setup = common.setup()?;
            let (store, mpn) = load_model(&checkpoint)?;
            let seq = eval_sequences(&setup.topo, &common.eval_config(&setup, 1), setup.seed)?.remove(0);
            let emb = embeddings_at_step(&store, &mpn, &setup.topo, &seq, common.horizon, common.step_ms, step)?;
            let path = common.out.join("embeddings.svg");
            write(path.clone(), embeddings_svg(&emb, &setup.topo)?)?;
            println!("wrote {}", path.display());
        }
        Command::ExportTables { common, checkpoint, step } => {
            let setup = common.setup()?;
            let (store, mpn) = load_model(&checkpoint)?;
            let seq = eval_sequences(&setup.topo, &common.eval_config(&setup, 1), setup.seed)?.remove(0);
            let emb = embeddings_at_step(&store, &mpn, &setup.topo, &seq, common.horizon, common.step_ms, step)?;
            let dist = embedding_distances(&emb)?;
            let path = common.out.join("tables.csv");
            write(path.clone(), routing_csv(&greedy_tables(&dist, &setup.topo)?, &dist))?;
            println!("wrote {}", path.display());
        }
        Command::Report(Report::Seeds { common, checkpoint, episodes }) => {
            let setup = common.setup()?;
            let eval = common.eval_config(&setup, episodes);
            let seqs = eval_sequences(&setup.topo, &eval, setup.seed)?;
            let mut rows = Vec::new();
            for (i, path) in checkpoint.iter().enumerate() {
                let (store, mpn) = load_model(path)?;
                let policy = EvalPolicy::Learned { store: &store, cfg: &mpn, zero_telemetry: false };
                rows.extend(report_rows(i as u64, run_eval(policy, &setup.topo, &seqs, &eval)?));
            }
            let path = common.out.join("seeds.csv");
            write(path.clone(), seeds_csv(&rows))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
