//! Seeded scenario runner: generates or loads overlays, applies failure
//! schedules, then maps, adapts, routes and assigns once per trial.

mod bench;
mod generate;
mod run;
mod scenario;
mod seeds;

pub use bench::{routing_scaling, small_world_lattice, ScalingPoint};
pub use generate::{generate_failures, generate_network, generate_network_with, GeneratorParams, RandomFailures};
pub use run::{
    run_scenario, DemandRoute, MetricsRecord, OutputFormat, PhaseTimings, RunOptions, RunOutput, SolverUsed,
    TrialSolution,
};
pub use scenario::{BaseGraphParams, NetworkSection, Scenario, SolverChoice};
pub use seeds::{stream, Purpose};
