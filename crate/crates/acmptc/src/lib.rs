//! Deterministic discrete-time simulator of multi-path data transport for
//! high-rate interactive streams.
//!
//! The crate models a set of network paths with time-varying bandwidth,
//! latency, loss, and congestion; an analytical multi-path TCP layer with
//! single-path and vanilla multi-path baseline schedulers; an adaptive
//! controller that scores and selects paths, reallocates on congestion,
//! delay, and loss thresholds, drives per-path congestion windows, and
//! shares path bandwidth across streams; and a multi-agent advantage
//! actor-critic trainer that learns to steer that controller.
//!
//! Everything is reproducible: a single `u64` seed pins the network
//! trajectory, the scheduler decisions, and the training run.
//!
//! Start with the `examples/` directory — there is one runnable example per
//! major capability — or the `acmptc` binary for the command-line surface
//! (`simulate`, `train`, `compare`, `gradcheck`, `export-plots`).

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod control;
pub mod drl;
pub mod export;
pub mod mptcp;
pub mod net;
pub mod rng;
pub mod sim;

/// Crate version embedded in every exported artifact header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use control::{ControlParams, StreamSpec};
pub use net::{DynamicsConfig, NetworkState, PathState};
pub use sim::{
    make_scenario, run_comparison, run_episode, summarize, EpisodeResult, MetricsRecord,
    ScenarioConfig, ScenarioKind, SchedulerKind,
};
