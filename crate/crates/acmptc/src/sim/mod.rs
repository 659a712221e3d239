//! Episode orchestration.
//!
//! Wires the network process, streams, and a chosen scheduler into
//! deterministic fixed-horizon episodes; collects per-step per-stream
//! metrics; generates scenario families; and runs paired multi-seed
//! scheduler comparisons on identical network trajectories.

mod compare;
mod episode;

pub use compare::{run_comparison, sign_test_p_value, ComparisonReport, SchedulerColumn, SeedSummary};
pub use episode::{run_episode, run_episode_with_agents, train_agents, Engine, SimEnvironment};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlParams, StreamSpec};
use crate::drl::{AgentConfig, DrlError};
use crate::net::{DynamicsConfig, NetError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
    #[error(transparent)]
    Drl(#[from] DrlError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot summarize an empty record set")]
    EmptyRecords,
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Which decision logic drives the streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    /// Single path, pinned at start to the highest-bandwidth path.
    Tcp,
    /// Split over all paths proportionally to modeled throughput.
    Mptcp,
    /// The adaptive rule-based controller.
    Acmptc,
    /// The adaptive controller steered by trained agents.
    AcmptcDrl,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] =
        [SchedulerKind::Tcp, SchedulerKind::Mptcp, SchedulerKind::Acmptc, SchedulerKind::AcmptcDrl];

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Tcp => "tcp",
            SchedulerKind::Mptcp => "mptcp",
            SchedulerKind::Acmptc => "acmptc",
            SchedulerKind::AcmptcDrl => "acmptc_drl",
        }
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tcp" => Ok(SchedulerKind::Tcp),
            "mptcp" => Ok(SchedulerKind::Mptcp),
            "acmptc" => Ok(SchedulerKind::Acmptc),
            "acmptc_drl" => Ok(SchedulerKind::AcmptcDrl),
            other => Err(format!("unknown scheduler `{other}` (expected tcp, mptcp, acmptc, or acmptc_drl)")),
        }
    }
}

/// Scenario families differing in how hard the network moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Steady,
    Variable,
    Extreme,
}

/// Everything needed to run one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub dynamics: DynamicsConfig,
    pub streams: Vec<StreamSpec>,
    pub control: ControlParams,
    pub agent: AgentConfig,
    /// Episode length in steps.
    pub horizon: u64,
    pub scheduler: SchedulerKind,
    pub scenario_kind: ScenarioKind,
    /// Optional network trace CSV replacing the random walk.
    pub trace_path: Option<PathBuf>,
    /// Optional stream bitrate trace CSV replacing constant demand.
    pub stream_trace_path: Option<PathBuf>,
    /// Optional pre-trained model checkpoint for the DRL scheduler.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dynamics: DynamicsConfig::default(),
            streams: vec![
                StreamSpec { stream_id: 0, expected_rate_mbps: 10.0, weight_gamma: 1.0, max_paths: 3 },
                StreamSpec { stream_id: 1, expected_rate_mbps: 20.0, weight_gamma: 1.0, max_paths: 3 },
                StreamSpec { stream_id: 2, expected_rate_mbps: 30.0, weight_gamma: 1.0, max_paths: 3 },
            ],
            control: ControlParams::default(),
            agent: AgentConfig::default(),
            horizon: 1000,
            scheduler: SchedulerKind::Acmptc,
            scenario_kind: ScenarioKind::Variable,
            trace_path: None,
            stream_trace_path: None,
            checkpoint_path: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.dynamics.validate()?;
        self.control.validate()?;
        self.agent.validate()?;
        if self.horizon == 0 {
            return Err(SimError::InvalidScenario("horizon must be at least 1".into()));
        }
        if self.streams.is_empty() {
            return Err(SimError::InvalidScenario("at least one stream is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for stream in &self.streams {
            stream.validate()?;
            if !seen.insert(stream.stream_id) {
                return Err(SimError::InvalidScenario(format!(
                    "duplicate stream_id {}",
                    stream.stream_id
                )));
            }
        }
        Ok(())
    }
}

/// Derive a scenario family from a base configuration.
///
/// Steady freezes the walk; variable uses a 10% step; extreme uses a 30%
/// step, raises the loss ceiling to 5%, and drops the bandwidth floor to
/// 10% of the base floor.
pub fn make_scenario(kind: ScenarioKind, base: &ScenarioConfig) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.scenario_kind = kind;
    match kind {
        ScenarioKind::Steady => cfg.dynamics.walk_step_fraction = 0.0,
        ScenarioKind::Variable => cfg.dynamics.walk_step_fraction = 0.1,
        ScenarioKind::Extreme => {
            cfg.dynamics.walk_step_fraction = 0.3;
            cfg.dynamics.loss_range[1] = 0.05;
            cfg.dynamics.bandwidth_range[0] = 0.1 * base.dynamics.bandwidth_range[0];
        }
    }
    cfg
}

/// Measured per-step, per-stream metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: u64,
    pub stream_id: u32,
    pub delivered_mbps: f64,
    /// Delivered-weighted mean latency across the paths the stream used.
    pub latency_ms: f64,
    /// Fraction of the stream's offered traffic that was not delivered.
    pub loss_rate: f64,
    pub qos: f64,
    pub utility: f64,
    /// Sorted path ids the stream was assigned this step.
    pub assigned_paths: Vec<usize>,
}

/// Per-kind constraint violation tallies over an episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub bandwidth_cap: u64,
    pub latency_bound: u64,
    pub loss_bound: u64,
    pub qos_floor: u64,
    pub path_assignment: u64,
}

impl ViolationCounts {
    /// Hard resource/QoS violations (path-assignment drift excluded: the
    /// reallocation rules move streams off the score-optimal set by design).
    pub fn hard_total(&self) -> u64 {
        self.bandwidth_cap + self.latency_bound + self.loss_bound + self.qos_floor
    }
}

/// Descriptive statistics over one record population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mean_delivered_mbps: f64,
    pub min_delivered_mbps: f64,
    pub max_delivered_mbps: f64,
    /// Sum of delivered rate over 1-second steps, i.e. megabits moved.
    pub cumulative_delivered_mbit: f64,
    pub mean_latency_ms: f64,
    /// Nearest-rank 95th percentile latency.
    pub p95_latency_ms: f64,
    pub mean_loss: f64,
    pub mean_qos: f64,
    pub mean_utility: f64,
}

/// Per-stream and aggregate statistics of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub aggregate: MetricsSummary,
    pub per_stream: Vec<(u32, MetricsSummary)>,
}

fn stats_over<'a>(records: impl Iterator<Item = &'a MetricsRecord> + Clone) -> MetricsSummary {
    let n = records.clone().count().max(1) as f64;
    let mut latencies: Vec<f64> = records.clone().map(|r| r.latency_ms).collect();
    latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = if latencies.is_empty() {
        0.0
    } else {
        let rank = ((0.95 * latencies.len() as f64).ceil() as usize).clamp(1, latencies.len());
        latencies[rank - 1]
    };
    let sum = |f: fn(&MetricsRecord) -> f64| records.clone().map(f).sum::<f64>();
    MetricsSummary {
        mean_delivered_mbps: sum(|r| r.delivered_mbps) / n,
        min_delivered_mbps: records.clone().map(|r| r.delivered_mbps).fold(f64::INFINITY, f64::min),
        max_delivered_mbps: records.clone().map(|r| r.delivered_mbps).fold(f64::NEG_INFINITY, f64::max),
        cumulative_delivered_mbit: sum(|r| r.delivered_mbps),
        mean_latency_ms: sum(|r| r.latency_ms) / n,
        p95_latency_ms: p95,
        mean_loss: sum(|r| r.loss_rate) / n,
        mean_qos: sum(|r| r.qos) / n,
        mean_utility: sum(|r| r.utility) / n,
    }
}

/// Per-stream and aggregate statistics; errors on an empty record set.
pub fn summarize(records: &[MetricsRecord]) -> Result<Summary, SimError> {
    if records.is_empty() {
        return Err(SimError::EmptyRecords);
    }
    let mut ids: Vec<u32> = records.iter().map(|r| r.stream_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let per_stream = ids
        .iter()
        .map(|&id| (id, stats_over(records.iter().filter(move |r| r.stream_id == id))))
        .collect();
    Ok(Summary { aggregate: stats_over(records.iter()), per_stream })
}

/// Everything produced by one episode.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub summary: Summary,
    pub violations: ViolationCounts,
    /// Moves triggered by the congestion/delay/loss rules.
    pub reallocations: u64,
    /// Paths added because granted bandwidth fell short of demand.
    pub path_additions: u64,
    /// Smallest congestion window observed at any step, stream, and path.
    pub min_cwnd_mbit: f64,
    /// Total bandwidth allocated to streams per step per path, Mbps.
    pub path_allocation: Vec<Vec<f64>>,
    /// Capacity per path.
    pub path_capacity: Vec<f64>,
    /// Digest of the exogenous network trajectory (walk and background
    /// draws); schedulers compared on one seed must agree on it.
    pub exogenous_checksum: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: u64, stream_id: u32, delivered: f64, latency: f64) -> MetricsRecord {
        MetricsRecord {
            t,
            stream_id,
            delivered_mbps: delivered,
            latency_ms: latency,
            loss_rate: 0.0,
            qos: 1.0,
            utility: 0.5,
            assigned_paths: vec![0],
        }
    }

    #[test]
    fn summarize_requires_records() {
        assert!(matches!(summarize(&[]), Err(SimError::EmptyRecords)));
    }

    #[test]
    fn summarize_constant_delivery() {
        let records: Vec<MetricsRecord> = (1..=100).map(|t| record(t, 0, 10.0, 20.0)).collect();
        let summary = summarize(&records).unwrap();
        assert_eq!(summary.aggregate.mean_delivered_mbps, 10.0);
        assert_eq!(summary.aggregate.cumulative_delivered_mbit, 1000.0);
    }

    #[test]
    fn p95_is_nearest_rank() {
        let records: Vec<MetricsRecord> = (1..=100).map(|t| record(t, 0, 1.0, t as f64)).collect();
        let summary = summarize(&records).unwrap();
        assert_eq!(summary.aggregate.p95_latency_ms, 95.0);
    }

    #[test]
    fn single_record_summary_is_that_record() {
        let summary = summarize(&[record(1, 3, 7.5, 42.0)]).unwrap();
        assert_eq!(summary.aggregate.mean_delivered_mbps, 7.5);
        assert_eq!(summary.aggregate.p95_latency_ms, 42.0);
        assert_eq!(summary.per_stream.len(), 1);
        assert_eq!(summary.per_stream[0].0, 3);
    }

    #[test]
    fn scenario_kinds_differ_only_in_stated_fields() {
        let base = ScenarioConfig::default();
        let steady = make_scenario(ScenarioKind::Steady, &base);
        let variable = make_scenario(ScenarioKind::Variable, &base);
        assert_eq!(steady.dynamics.walk_step_fraction, 0.0);
        assert_eq!(variable.dynamics.walk_step_fraction, 0.1);
        let mut steady_patched = steady.clone();
        steady_patched.dynamics.walk_step_fraction = variable.dynamics.walk_step_fraction;
        steady_patched.scenario_kind = variable.scenario_kind;
        assert_eq!(steady_patched, variable);

        let extreme = make_scenario(ScenarioKind::Extreme, &base);
        assert_eq!(extreme.dynamics.loss_range[1], 0.05);
        assert_eq!(extreme.dynamics.bandwidth_range[0], 1.0);
        assert_eq!(extreme.dynamics.walk_step_fraction, 0.3);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let cfg = ScenarioConfig { horizon: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.streams.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.streams[1].stream_id = cfg.streams[0].stream_id;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.dynamics.n_paths = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scheduler_names_roundtrip() {
        for kind in SchedulerKind::ALL {
            assert_eq!(kind.name().parse::<SchedulerKind>().unwrap(), kind);
        }
        assert!("bogus".parse::<SchedulerKind>().is_err());
    }
}
