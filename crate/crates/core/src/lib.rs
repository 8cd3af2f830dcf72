//! Red-team workbench for multi-agent formation-control networks.
//!
//! The attacker eavesdrops stacked agent states, identifies a linear one-step
//! model by dynamic mode decomposition, bounds what bounded actuator
//! injections can do with polytopic reachable sets, picks the agent pair
//! whose reach sets are farthest apart and pushes them further apart, and
//! optionally recovers the graph Laplacian from the identified model to cut
//! the link that disconnects the formation.
//!
//! Numeric types are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix `f64`, which is what the CLI and experiments use.

pub mod attack;
pub mod config;
pub mod dmd;
pub mod error;
pub mod graph;
pub mod harness;
pub mod laprec;
pub mod ncs;
pub mod plot;
pub mod polygon;
pub mod reachset;
pub mod scalar;

pub use error::{Error, Result};
pub use graph::Graph;
pub use scalar::Real;

pub type AgentModel64 = ncs::AgentModel<f64>;
pub type Scenario64 = ncs::Scenario<f64>;
pub type StackedState64 = ncs::StackedState<f64>;
pub type SnapshotBuffer64 = dmd::SnapshotBuffer<f64>;
pub type DmdModel64 = dmd::DmdModel<f64>;
pub type InputPolytope64 = reachset::InputPolytope<f64>;
pub type AgentPolygon64 = reachset::AgentPolygon<f64>;
pub type ReachSpec64 = reachset::ReachSpec<f64>;
pub type AttackConfig64 = attack::AttackConfig<f64>;
pub type AttackDecision64 = attack::AttackDecision<f64>;
pub type RecoveryResult64 = laprec::RecoveryResult<f64>;
pub type KroneckerModel64 = laprec::KroneckerModel<f64>;
pub type RunRecord64 = harness::RunRecord<f64>;
pub type ExperimentConfig64 = config::ExperimentConfig<f64>;
