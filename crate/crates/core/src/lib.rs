//! Discrete-event simulation of on-demand mesh multicast routing in a mobile
//! ad hoc network, with rushing, blackhole, jellyfish and neighbor attackers.
//!
//! [`sim::run`] executes one [`sim::Scenario`]; [`harness`] builds scenarios
//! from configuration files, runs seeded sweeps and writes CSV results.

pub mod adversary;
pub mod analysis;
pub mod engine;
pub mod harness;
pub mod protocol;
pub mod sim;
pub mod world;

pub use adversary::{AttackKind, Attacker, Behavior, Placement, RushScope};
pub use analysis::{run_metrics, RunMetrics, RunTrace};
pub use engine::{EventQueue, RngStream, SimTime, StreamId};
pub use harness::{ExperimentConfig, ResultRow, Sweep};
pub use sim::{run, Scenario, SimError, Simulation};
pub use world::{Area, NodeId, Position, RadioParams};
