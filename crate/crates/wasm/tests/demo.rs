use placer_core::eigrp::link_costs;
use placer_core::mpn::MpnConfig;
use placer_core::nn::write_checkpoint;
use placer_core::Topology;
use placer_wasm::{eigrp_routes, embedding_svg, simulate, Route, SimResult};

fn sim(topo: &str, opts: &str, ckpt: &[u8]) -> SimResult {
    serde_json::from_str(&simulate(topo, opts, ckpt).unwrap()).unwrap()
}

#[test]
fn routes_are_consistent_shortest_paths() {
    let topo = Topology::mini5();
    let costs = link_costs(&topo);
    let routes: Vec<Route> = serde_json::from_str(&eigrp_routes("mini5").unwrap()).unwrap();
    assert_eq!(routes.len(), 20);
    let cost_of = |u: usize, z: usize| {
        if u == z { 0 } else { routes.iter().find(|r| r.u == u && r.z == z).unwrap().cost }
    };
    for r in &routes {
        assert_eq!(r.path.first(), Some(&r.u));
        assert_eq!(r.path.last(), Some(&r.z));
        assert_eq!(r.path[1], r.next_hop);
        let mut total = 0;
        for hop in r.path.windows(2) {
            total += costs[topo.link_between(hop[0], hop[1]).expect("path follows links")];
        }
        assert_eq!(total, r.cost);
        // Bellman: cost(u) = c(u, v) + cost(v) for the chosen next hop v
        assert_eq!(r.cost, costs[topo.link_between(r.u, r.next_hop).unwrap()] + cost_of(r.next_hop, r.z));
    }
}

#[test]
fn static_routes_never_change() {
    let r = sim("two-path", r#"{"horizon": 60, "seed": 3}"#, &[]);
    assert_eq!(r.fluctuation_pct, 0.0);
    assert_eq!(r.step_goodput_mb.len(), 60);
    assert_eq!(r.step_changes, vec![0; 59]);
    let per_step: f64 = r.step_goodput_mb.iter().sum();
    assert!((per_step - r.goodput_mb).abs() <= 1e-9 * r.goodput_mb.max(1.0), "{per_step} vs {}", r.goodput_mb);
    assert!(r.goodput_mb > 0.0);
}

#[test]
fn simulation_is_deterministic() {
    let opts = r#"{"policy": "learned", "horizon": 40, "seed": 7, "d": 3}"#;
    assert_eq!(simulate("mini5", opts, &[]).unwrap(), simulate("mini5", opts, &[]).unwrap());
}

#[test]
fn checkpoint_bytes_match_seeded_init() {
    let cfg = MpnConfig::new(2);
    let mut bytes = Vec::new();
    write_checkpoint(&cfg.init(11), &mut bytes).unwrap();
    let opts = r#"{"policy": "learned", "horizon": 30, "seed": 11, "d": 2}"#;
    assert_eq!(sim("mini5", opts, &bytes), sim("mini5", opts, &[]));
    assert_eq!(embedding_svg("mini5", &bytes, 9, 11, 4).unwrap(), embedding_svg("mini5", &[], 2, 11, 4).unwrap());
}

#[test]
fn blind_learned_policy_is_static() {
    let r = sim("mini5", r#"{"policy": "learned", "horizon": 40, "zero_telemetry": true}"#, &[]);
    assert_eq!(r.fluctuation_pct, 0.0);
    assert!(r.step_changes.iter().all(|&c| c == 0));
}

#[test]
fn custom_topology_and_pairs() {
    let text = "nodes 3\nlink 0 1 10 1 64\nlink 1 2 10 1 64\n";
    let r = sim(text, r#"{"horizon": 50, "pairs": [[0, 2]], "load_factor": 0.5}"#, &[]);
    assert!(r.goodput_mb > 0.0);
    let routes: Vec<Route> = serde_json::from_str(&eigrp_routes(text).unwrap()).unwrap();
    assert_eq!(routes.iter().find(|r| r.u == 0 && r.z == 2).unwrap().path, vec![0, 1, 2]);
}

#[test]
fn svg_has_one_marker_per_node() {
    let svg = embedding_svg("two-path", &[], 2, 0, 10).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches(r#"class="node""#).count(), 4);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(eigrp_routes("nodes two").is_err());
    assert!(simulate("mini5", r#"{"policy": "ospf"}"#, &[]).is_err());
    assert!(simulate("mini5", r#"{"horizon": 0}"#, &[]).is_err());
    assert!(simulate("mini5", r#"{"horizon": 5000}"#, &[]).is_err());
    assert!(simulate("mini5", "{not json", &[]).is_err());
    assert!(simulate("mini5", r#"{"policy": "learned"}"#, b"garbage").is_err());
    assert!(embedding_svg("mini5", &[], 0, 0, 0).is_err());
}
