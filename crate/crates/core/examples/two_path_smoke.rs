//! Trains on the two-path topology with a reduced schedule and compares
//! greedy evaluation goodput against static shortest-path routing.
//!
//! `cargo run --release -p placer-core --example two_path_smoke -- [seeds]`

use std::time::Instant;

use placer_core::experiment::{aggregate_iqm, eval_sequences, run_eval, EvalConfig, EvalPolicy};
use placer_core::mpn::MpnConfig;
use placer_core::ppo::{train, TrainConfig};
use placer_core::traffic::TrafficConfig;
use placer_core::Topology;

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let topo = Topology::two_path();
    let traffic = TrafficConfig { pairs: Some(vec![(0, 3)]), ..TrafficConfig::default() };
    let cfg = TrainConfig {
        iterations: 15,
        episodes_per_iter: 8,
        unique_sequences: 2,
        repeats: 4,
        horizon: 200,
        traffic: traffic.clone(),
        ..TrainConfig::default()
    };
    let eval = EvalConfig { episodes: 10, horizon: 200, traffic, ..EvalConfig::default() };
    let mpn = MpnConfig::new(2);
    let mut wins = 0;
    for seed in 0..seeds {
        let t0 = Instant::now();
        let out = train(&topo, &mpn, &cfg, seed, |row, _| {
            eprintln!(
                "  it {:2} goodput {:.3} fluct {:.1} pl {:+.4} vl {:.4} ent {:.2} clip {:.3}",
                row.iteration, row.mean_goodput_mb, row.fluctuation_pct, row.policy_loss,
                row.value_loss, row.entropy, row.clip_frac
            );
            Ok(())
        })
        .expect("training");
        let seqs = eval_sequences(&topo, &eval, seed).expect("traffic");
        let policy = EvalPolicy::Learned { store: &out.store, cfg: &mpn, zero_telemetry: false };
        let learned = run_eval(policy, &topo, &seqs, &eval).expect("eval");
        let base = run_eval(EvalPolicy::Eigrp, &topo, &seqs, &eval).expect("eval");
        let g = |m: &[placer_core::experiment::Metrics]| {
            aggregate_iqm(&m.iter().map(|m| m.goodput_mb).collect::<Vec<_>>()).unwrap()
        };
        let (gl, gb) = (g(&learned), g(&base));
        let fl = learned.iter().map(|m| m.fluctuation_pct).sum::<f64>() / learned.len() as f64;
        wins += (gl >= gb) as usize;
        println!(
            "seed {seed}: placer {gl:.4} MB  eigrp {gb:.4} MB  fluct {fl:.2}%  ({:.0} s)",
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{wins}/{seeds} seeds at or above eigrp");
}
