//! Simulated network substrate.
//!
//! Owns per-path state (bandwidth, latency, RTT, loss, congestion), its
//! evolution over discrete 1-second steps — either a bounded multiplicative
//! random walk or trace replay — and the load model that maps offered
//! traffic onto congestion, effective loss, and delivered throughput.
//!
//! Everything here is a pure value transformation: callers own the RNG and
//! the state, so identical `(config, seed, operation sequence)` inputs give
//! bit-identical trajectories.

use std::collections::BTreeSet;
use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid {field} range: min {min} must not exceed max {max}")]
    InvalidRange { field: &'static str, min: f64, max: f64 },
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("offered load must be non-negative, got {value} on path {path_id}")]
    NegativeLoad { path_id: usize, value: f64 },
    #[error("offered load vector has {got} entries, network has {expected} paths")]
    LoadLengthMismatch { expected: usize, got: usize },
    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },
    #[error("trace record for unknown path {path_id} (network has {n_paths} paths)")]
    UnknownPath { path_id: usize, n_paths: usize },
    #[error("trace record at t={record_t} cannot apply to network at t={state_t} (expected t={})", state_t + 1)]
    TraceTimeMismatch { record_t: u64, state_t: u64 },
}

/// Time-varying metrics of one network path.
///
/// `loss_rate` is the path's intrinsic (exogenous) loss; overload-induced
/// loss is computed by [`apply_load`] and reported in its outcome rather
/// than written back here, so the random walk never feeds on the
/// scheduler's own traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub path_id: usize,
    pub bandwidth_mbps: f64,
    pub latency_ms: f64,
    pub rtt_ms: f64,
    pub loss_rate: f64,
    /// Utilization ratio in [0, 1], set by the most recent load application.
    pub congestion: f64,
    /// Hard capacity ceiling; `bandwidth_mbps` never exceeds it.
    pub capacity_mbps: f64,
}

impl PathState {
    /// Check the type invariants; used by tests and debug assertions.
    pub fn invariants_hold(&self) -> bool {
        let finite = [
            self.bandwidth_mbps,
            self.latency_ms,
            self.rtt_ms,
            self.loss_rate,
            self.congestion,
            self.capacity_mbps,
        ]
        .iter()
        .all(|v| v.is_finite());
        finite
            && (0.0..=1.0).contains(&self.loss_rate)
            && (0.0..=1.0).contains(&self.congestion)
            && self.bandwidth_mbps >= 0.0
            && self.bandwidth_mbps <= self.capacity_mbps
            && self.rtt_ms >= self.latency_ms
    }
}

/// The whole network at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    /// Discrete time step; one step is one second.
    pub t: u64,
    /// Paths indexed by `path_id` = 0..n-1.
    pub paths: Vec<PathState>,
}

impl NetworkState {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn invariants_hold(&self) -> bool {
        !self.paths.is_empty()
            && self
                .paths
                .iter()
                .enumerate()
                .all(|(i, p)| p.path_id == i && p.invariants_hold())
    }
}

/// Parameters of the random-walk network process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub n_paths: usize,
    /// [min, max] Mbps; the max doubles as every path's capacity.
    pub bandwidth_range: [f64; 2],
    /// [min, max] ms; min must be positive (RTT divides by it downstream).
    pub latency_range: [f64; 2],
    /// [min, max] loss probability, within [0, 1].
    pub loss_range: [f64; 2],
    /// Max per-step relative change of each walked metric, in [0, 1].
    /// Zero freezes the walk.
    pub walk_step_fraction: f64,
    /// [min, max] Mbps of exogenous traffic added per path per step.
    pub background_traffic_range: [f64; 2],
    pub seed: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            n_paths: 5,
            bandwidth_range: [10.0, 100.0],
            latency_range: [10.0, 100.0],
            loss_range: [0.0, 0.05],
            walk_step_fraction: 0.1,
            background_traffic_range: [0.0, 50.0],
            seed: 0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.n_paths == 0 {
            return Err(NetError::InvalidField {
                field: "n_paths",
                reason: "must be at least 1".into(),
            });
        }
        for (field, [lo, hi]) in [
            ("bandwidth_range", self.bandwidth_range),
            ("latency_range", self.latency_range),
            ("loss_range", self.loss_range),
            ("background_traffic_range", self.background_traffic_range),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(NetError::InvalidRange { field, min: lo, max: hi });
            }
        }
        if self.bandwidth_range[0] < 0.0 {
            return Err(NetError::InvalidField {
                field: "bandwidth_range",
                reason: "bandwidth must be non-negative".into(),
            });
        }
        if self.latency_range[0] <= 0.0 {
            return Err(NetError::InvalidField {
                field: "latency_range",
                reason: "latency must be positive".into(),
            });
        }
        if self.loss_range[0] < 0.0 || self.loss_range[1] > 1.0 {
            return Err(NetError::InvalidField {
                field: "loss_range",
                reason: "loss must lie in [0, 1]".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.walk_step_fraction) {
            return Err(NetError::InvalidField {
                field: "walk_step_fraction",
                reason: "must lie in [0, 1]".into(),
            });
        }
        if self.background_traffic_range[0] < 0.0 {
            return Err(NetError::InvalidField {
                field: "background_traffic_range",
                reason: "background traffic must be non-negative".into(),
            });
        }
        // config documents are TOML, whose integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(NetError::InvalidField {
                field: "seed",
                reason: format!("must not exceed {} (TOML integer range)", i64::MAX),
            });
        }
        Ok(())
    }
}

/// One row of a network trace: overrides a path's exogenous metrics at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub path_id: usize,
    pub bandwidth_mbps: f64,
    pub latency_ms: f64,
    pub loss_rate: f64,
}

/// Result of pushing offered load through the network for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome {
    /// Network with congestion refreshed from the offered load.
    pub state: NetworkState,
    /// Per-path throughput that survived bandwidth caps and loss, Mbps.
    pub delivered_mbps: Vec<f64>,
    /// Per-path loss actually experienced: intrinsic loss plus the
    /// fraction of offered traffic dropped as overflow.
    pub effective_loss: Vec<f64>,
}

fn sample_range(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Sample a fresh network from the configured ranges.
///
/// RTT starts at twice the one-way latency; congestion starts at zero.
pub fn init_network(config: &DynamicsConfig, rng: &mut impl Rng) -> Result<NetworkState, NetError> {
    config.validate()?;
    let capacity = config.bandwidth_range[1];
    let paths = (0..config.n_paths)
        .map(|path_id| {
            let bandwidth = sample_range(rng, config.bandwidth_range[0], config.bandwidth_range[1]);
            let latency = sample_range(rng, config.latency_range[0], config.latency_range[1]);
            let loss = sample_range(rng, config.loss_range[0], config.loss_range[1]);
            PathState {
                path_id,
                bandwidth_mbps: bandwidth,
                latency_ms: latency,
                rtt_ms: 2.0 * latency,
                loss_rate: loss,
                congestion: 0.0,
                capacity_mbps: capacity,
            }
        })
        .collect();
    Ok(NetworkState { t: 0, paths })
}

fn rtt_from(latency_ms: f64, congestion: f64) -> f64 {
    2.0 * latency_ms * (1.0 + congestion)
}

/// Advance the network one step of the bounded multiplicative random walk.
///
/// Each path's bandwidth, latency, and loss move by a uniform relative factor
/// in `±walk_step_fraction` and are clipped back into the configured ranges.
/// RTT is recomputed as `2 * latency * (1 + congestion)`, which is how the
/// load applied on the previous step feeds back into observable delay.
pub fn step_dynamics(
    state: &NetworkState,
    config: &DynamicsConfig,
    rng: &mut impl Rng,
) -> NetworkState {
    let frac = config.walk_step_fraction;
    let factor = |rng: &mut dyn rand::RngCore| -> f64 {
        if frac == 0.0 {
            1.0
        } else {
            1.0 + rand::Rng::gen_range(rng, -frac..=frac)
        }
    };
    let paths = state
        .paths
        .iter()
        .map(|p| {
            let bandwidth = (p.bandwidth_mbps * factor(rng))
                .clamp(config.bandwidth_range[0], config.bandwidth_range[1]);
            let latency = (p.latency_ms * factor(rng))
                .clamp(config.latency_range[0], config.latency_range[1]);
            let loss =
                (p.loss_rate * factor(rng)).clamp(config.loss_range[0], config.loss_range[1]);
            PathState {
                path_id: p.path_id,
                bandwidth_mbps: bandwidth,
                latency_ms: latency,
                rtt_ms: rtt_from(latency, p.congestion),
                loss_rate: loss,
                congestion: p.congestion,
                capacity_mbps: p.capacity_mbps,
            }
        })
        .collect();
    NetworkState { t: state.t + 1, paths }
}

/// Push per-path offered load (Mbps) through the network.
///
/// Congestion becomes `min(1, offered / capacity)`. Traffic offered beyond
/// the path's current bandwidth is dropped proportionally, on top of the
/// intrinsic loss; delivered throughput is
/// `min(offered, bandwidth) * (1 - effective_loss)`.
pub fn apply_load(state: &NetworkState, offered_mbps_per_path: &[f64]) -> Result<LoadOutcome, NetError> {
    if offered_mbps_per_path.len() != state.paths.len() {
        return Err(NetError::LoadLengthMismatch {
            expected: state.paths.len(),
            got: offered_mbps_per_path.len(),
        });
    }
    for (p, &offered) in state.paths.iter().zip(offered_mbps_per_path) {
        if !offered.is_finite() || offered < 0.0 {
            return Err(NetError::NegativeLoad { path_id: p.path_id, value: offered });
        }
    }
    let mut new_state = state.clone();
    let mut delivered = Vec::with_capacity(state.paths.len());
    let mut effective_loss = Vec::with_capacity(state.paths.len());
    for (p, &offered) in new_state.paths.iter_mut().zip(offered_mbps_per_path) {
        p.congestion = if p.capacity_mbps > 0.0 {
            (offered / p.capacity_mbps).min(1.0)
        } else {
            if offered > 0.0 { 1.0 } else { 0.0 }
        };
        let overflow = if offered > p.bandwidth_mbps && offered > 0.0 {
            (offered - p.bandwidth_mbps) / offered
        } else {
            0.0
        };
        let loss = (p.loss_rate + overflow).clamp(0.0, 1.0);
        delivered.push(offered.min(p.bandwidth_mbps) * (1.0 - loss));
        effective_loss.push(loss);
    }
    Ok(LoadOutcome { state: new_state, delivered_mbps: delivered, effective_loss })
}

const TRACE_HEADER: &str = "t,path_id,bandwidth_mbps,latency_ms,loss_rate";

/// Parse a network trace CSV (schema: `t,path_id,bandwidth_mbps,latency_ms,loss_rate`).
///
/// Records come back sorted by `(t, path_id)`; duplicates and out-of-range
/// values are rejected with the offending line number.
pub fn load_trace(source: impl BufRead) -> Result<Vec<TraceRecord>, NetError> {
    let mut records = Vec::new();
    let mut seen: BTreeSet<(u64, usize)> = BTreeSet::new();
    let mut lines = source.lines().enumerate();

    let (_, header) = lines.next().ok_or(NetError::TraceParse {
        line: 1,
        reason: "empty input, expected header".into(),
    })?;
    let header = header.map_err(|e| NetError::TraceParse { line: 1, reason: e.to_string() })?;
    if header.trim() != TRACE_HEADER {
        return Err(NetError::TraceParse {
            line: 1,
            reason: format!("expected header `{TRACE_HEADER}`, got `{}`", header.trim()),
        });
    }

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| NetError::TraceParse { line: line_no, reason: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(NetError::TraceParse {
                line: line_no,
                reason: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse_u64 = |s: &str, name: &str| {
            s.trim().parse::<u64>().map_err(|_| NetError::TraceParse {
                line: line_no,
                reason: format!("invalid {name}: `{s}`"),
            })
        };
        let parse_f64 = |s: &str, name: &str| {
            s.trim().parse::<f64>().map_err(|_| NetError::TraceParse {
                line: line_no,
                reason: format!("invalid {name}: `{s}`"),
            })
        };
        let t = parse_u64(fields[0], "t")?;
        let path_id = parse_u64(fields[1], "path_id")? as usize;
        let bandwidth = parse_f64(fields[2], "bandwidth_mbps")?;
        let latency = parse_f64(fields[3], "latency_ms")?;
        let loss = parse_f64(fields[4], "loss_rate")?;
        if !bandwidth.is_finite() || bandwidth < 0.0 {
            return Err(NetError::TraceParse {
                line: line_no,
                reason: format!("bandwidth_mbps out of range: {bandwidth}"),
            });
        }
        if !latency.is_finite() || latency <= 0.0 {
            return Err(NetError::TraceParse {
                line: line_no,
                reason: format!("latency_ms must be positive, got {latency}"),
            });
        }
        if !loss.is_finite() || !(0.0..=1.0).contains(&loss) {
            return Err(NetError::TraceParse {
                line: line_no,
                reason: format!("loss_rate out of range [0, 1]: {loss}"),
            });
        }
        if !seen.insert((t, path_id)) {
            return Err(NetError::TraceParse {
                line: line_no,
                reason: format!("duplicate record for (t={t}, path_id={path_id})"),
            });
        }
        records.push(TraceRecord { t, path_id, bandwidth_mbps: bandwidth, latency_ms: latency, loss_rate: loss });
    }
    records.sort_by_key(|r| (r.t, r.path_id));
    Ok(records)
}

/// Advance the network one step by overwriting listed paths from trace
/// records; unlisted paths carry forward unchanged.
///
/// All records must carry `t = state.t + 1`. Capacity is raised if a record
/// sets bandwidth above it, so trace data is never silently clipped.
pub fn trace_step(state: &NetworkState, records_at_t: &[TraceRecord]) -> Result<NetworkState, NetError> {
    for r in records_at_t {
        if r.t != state.t + 1 {
            return Err(NetError::TraceTimeMismatch { record_t: r.t, state_t: state.t });
        }
        if r.path_id >= state.paths.len() {
            return Err(NetError::UnknownPath { path_id: r.path_id, n_paths: state.paths.len() });
        }
    }
    let mut new_state = state.clone();
    new_state.t = state.t + 1;
    for p in &mut new_state.paths {
        p.rtt_ms = rtt_from(p.latency_ms, p.congestion);
    }
    for r in records_at_t {
        let p = &mut new_state.paths[r.path_id];
        p.bandwidth_mbps = r.bandwidth_mbps;
        p.latency_ms = r.latency_ms;
        p.loss_rate = r.loss_rate;
        p.capacity_mbps = p.capacity_mbps.max(r.bandwidth_mbps);
        p.rtt_ms = rtt_from(r.latency_ms, p.congestion);
    }
    Ok(new_state)
}
