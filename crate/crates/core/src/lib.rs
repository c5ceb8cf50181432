//! Telemetry-aware greedy routing from latent node embeddings.
//!
//! A packet-level simulator ([`sim`]) turns topology, traffic and routing
//! tables into telemetry; [`state`] packs that into an attributed graph; a
//! message passing network ([`mpn`]) embeds every node into the unit ball;
//! [`greedy`] decodes next hops from pairwise embedding distances; and
//! [`ppo`] trains the whole pipeline against goodput. [`eigrp`] provides the
//! shortest-path baseline and [`experiment`] the evaluation protocol.

pub mod eigrp;
pub mod experiment;
pub mod greedy;
pub mod mpn;
pub mod nn;
mod par;
pub mod ppo;
pub mod sim;
pub mod state;
pub mod svg;
pub mod tables;
pub mod topology;
pub mod traffic;

pub use tables::RoutingTables;
pub use topology::{load_topology, Topology};
