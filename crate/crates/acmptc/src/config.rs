//! Scenario configuration documents.
//!
//! TOML with sections `[dynamics]`, `[[streams]]`, `[control]`, `[agent]`,
//! and `[run]`. Unknown keys are rejected; every missing key takes its
//! documented default, and the provenance of each field (file or default)
//! is kept for the `--explain-config` dump.
//!
//! `run.scenario_kind` names a scenario family; when the file sets it but
//! leaves the corresponding dynamics fields unset, the family's derivation
//! is applied (a steady file freezes the walk, an extreme one widens it).
//! Explicit dynamics values always win.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlParams, StreamSpec};
use crate::drl::AgentConfig;
use crate::net::DynamicsConfig;
use crate::sim::{make_scenario, ScenarioConfig, ScenarioKind, SchedulerKind, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] SimError),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Where a resolved field value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    File,
    Default,
}

#[derive(Debug, Clone)]
pub struct FieldProvenance {
    pub key: String,
    pub value: String,
    pub source: Source,
}

/// A parsed and validated scenario plus per-field provenance.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub config: ScenarioConfig,
    pub provenance: Vec<FieldProvenance>,
}

impl ParsedConfig {
    /// Human-readable provenance dump, one line per field.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        for field in &self.provenance {
            let tag = match field.source {
                Source::File => "file",
                Source::Default => "default",
            };
            out.push_str(&format!("{} = {}  [{}]\n", field.key, field.value, tag));
        }
        out
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dynamics: Option<RawDynamics>,
    streams: Option<Vec<RawStream>>,
    control: Option<RawControl>,
    agent: Option<RawAgent>,
    run: Option<RawRun>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDynamics {
    n_paths: Option<usize>,
    bandwidth_range: Option<[f64; 2]>,
    latency_range: Option<[f64; 2]>,
    loss_range: Option<[f64; 2]>,
    walk_step_fraction: Option<f64>,
    background_traffic_range: Option<[f64; 2]>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStream {
    stream_id: Option<u32>,
    expected_rate_mbps: Option<f64>,
    weight_gamma: Option<f64>,
    max_paths: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    sel_alpha: Option<f64>,
    sel_beta: Option<f64>,
    sel_gamma: Option<f64>,
    cwnd_inc_alpha: Option<f64>,
    cwnd_dec_beta: Option<f64>,
    rate_delta: Option<f64>,
    util_w_b: Option<f64>,
    util_w_l: Option<f64>,
    util_w_p: Option<f64>,
    util_w_q: Option<f64>,
    eta: Option<f64>,
    target_tau: Option<f64>,
    congestion_threshold: Option<f64>,
    rtt_threshold_ms: Option<f64>,
    latency_threshold_ms: Option<f64>,
    loss_threshold: Option<f64>,
    loss_max: Option<f64>,
    latency_max_ms: Option<f64>,
    qos_min: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    discount: Option<f64>,
    learning_rate: Option<f64>,
    epsilon_start: Option<f64>,
    epsilon_end: Option<f64>,
    epsilon_decay: Option<f64>,
    grad_clip_norm: Option<f64>,
    episodes: Option<u32>,
    horizon: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: Option<u64>,
    scheduler: Option<SchedulerKind>,
    scenario_kind: Option<ScenarioKind>,
    trace_path: Option<std::path::PathBuf>,
    stream_trace_path: Option<std::path::PathBuf>,
    checkpoint_path: Option<std::path::PathBuf>,
}

/// Fully-resolved document used when serializing a config back to TOML.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    dynamics: DynamicsConfig,
    streams: Vec<StreamSpec>,
    control: ControlParams,
    agent: AgentConfig,
    run: RunSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    horizon: u64,
    scheduler: SchedulerKind,
    scenario_kind: ScenarioKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_path: Option<std::path::PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stream_trace_path: Option<std::path::PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint_path: Option<std::path::PathBuf>,
}

struct Tracker {
    provenance: Vec<FieldProvenance>,
}

impl Tracker {
    fn pick<T: Clone + std::fmt::Debug>(&mut self, key: &str, file_value: Option<T>, default: T) -> T {
        let (value, source) = match file_value {
            Some(v) => (v, Source::File),
            None => (default, Source::Default),
        };
        self.provenance.push(FieldProvenance {
            key: key.to_string(),
            value: format!("{value:?}"),
            source,
        });
        value
    }
}

/// Parse a TOML scenario document, applying defaults and validating every
/// invariant. Unknown keys, type mismatches, and invariant violations are
/// errors naming the offending key.
pub fn parse_config(text: &str) -> Result<ParsedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    let defaults = ScenarioConfig::default();
    let mut tracker = Tracker { provenance: Vec::new() };

    let rd = raw.dynamics.unwrap_or_default();
    let walk_explicit = rd.walk_step_fraction.is_some();
    let loss_explicit = rd.loss_range.is_some();
    let bandwidth_explicit = rd.bandwidth_range.is_some();
    let dynamics = DynamicsConfig {
        n_paths: tracker.pick("dynamics.n_paths", rd.n_paths, defaults.dynamics.n_paths),
        bandwidth_range: tracker.pick(
            "dynamics.bandwidth_range",
            rd.bandwidth_range,
            defaults.dynamics.bandwidth_range,
        ),
        latency_range: tracker.pick("dynamics.latency_range", rd.latency_range, defaults.dynamics.latency_range),
        loss_range: tracker.pick("dynamics.loss_range", rd.loss_range, defaults.dynamics.loss_range),
        walk_step_fraction: tracker.pick(
            "dynamics.walk_step_fraction",
            rd.walk_step_fraction,
            defaults.dynamics.walk_step_fraction,
        ),
        background_traffic_range: tracker.pick(
            "dynamics.background_traffic_range",
            rd.background_traffic_range,
            defaults.dynamics.background_traffic_range,
        ),
        seed: tracker.pick("dynamics.seed", rd.seed, defaults.dynamics.seed),
    };

    let streams = match raw.streams {
        Some(raws) => raws
            .into_iter()
            .enumerate()
            .map(|(i, rs)| StreamSpec {
                stream_id: tracker.pick(&format!("streams[{i}].stream_id"), rs.stream_id, i as u32),
                expected_rate_mbps: tracker.pick(
                    &format!("streams[{i}].expected_rate_mbps"),
                    rs.expected_rate_mbps,
                    20.0,
                ),
                weight_gamma: tracker.pick(&format!("streams[{i}].weight_gamma"), rs.weight_gamma, 1.0),
                max_paths: tracker.pick(&format!("streams[{i}].max_paths"), rs.max_paths, 3),
            })
            .collect(),
        None => {
            for (i, s) in defaults.streams.iter().enumerate() {
                tracker.provenance.push(FieldProvenance {
                    key: format!("streams[{i}]"),
                    value: format!(
                        "{{ stream_id = {}, expected_rate_mbps = {:?}, weight_gamma = {:?}, max_paths = {} }}",
                        s.stream_id, s.expected_rate_mbps, s.weight_gamma, s.max_paths
                    ),
                    source: Source::Default,
                });
            }
            defaults.streams.clone()
        }
    };

    let rc = raw.control.unwrap_or_default();
    let dc = &defaults.control;
    let control = ControlParams {
        sel_alpha: tracker.pick("control.sel_alpha", rc.sel_alpha, dc.sel_alpha),
        sel_beta: tracker.pick("control.sel_beta", rc.sel_beta, dc.sel_beta),
        sel_gamma: tracker.pick("control.sel_gamma", rc.sel_gamma, dc.sel_gamma),
        cwnd_inc_alpha: tracker.pick("control.cwnd_inc_alpha", rc.cwnd_inc_alpha, dc.cwnd_inc_alpha),
        cwnd_dec_beta: tracker.pick("control.cwnd_dec_beta", rc.cwnd_dec_beta, dc.cwnd_dec_beta),
        rate_delta: tracker.pick("control.rate_delta", rc.rate_delta, dc.rate_delta),
        util_w_b: tracker.pick("control.util_w_b", rc.util_w_b, dc.util_w_b),
        util_w_l: tracker.pick("control.util_w_l", rc.util_w_l, dc.util_w_l),
        util_w_p: tracker.pick("control.util_w_p", rc.util_w_p, dc.util_w_p),
        util_w_q: tracker.pick("control.util_w_q", rc.util_w_q, dc.util_w_q),
        eta: tracker.pick("control.eta", rc.eta, dc.eta),
        target_tau: tracker.pick("control.target_tau", rc.target_tau, dc.target_tau),
        congestion_threshold: tracker.pick(
            "control.congestion_threshold",
            rc.congestion_threshold,
            dc.congestion_threshold,
        ),
        rtt_threshold_ms: tracker.pick("control.rtt_threshold_ms", rc.rtt_threshold_ms, dc.rtt_threshold_ms),
        latency_threshold_ms: tracker.pick(
            "control.latency_threshold_ms",
            rc.latency_threshold_ms,
            dc.latency_threshold_ms,
        ),
        loss_threshold: tracker.pick("control.loss_threshold", rc.loss_threshold, dc.loss_threshold),
        loss_max: tracker.pick("control.loss_max", rc.loss_max, dc.loss_max),
        latency_max_ms: tracker.pick("control.latency_max_ms", rc.latency_max_ms, dc.latency_max_ms),
        qos_min: tracker.pick("control.qos_min", rc.qos_min, dc.qos_min),
    };

    let ra = raw.agent.unwrap_or_default();
    let da = &defaults.agent;
    let agent = AgentConfig {
        discount: tracker.pick("agent.discount", ra.discount, da.discount),
        learning_rate: tracker.pick("agent.learning_rate", ra.learning_rate, da.learning_rate),
        epsilon_start: tracker.pick("agent.epsilon_start", ra.epsilon_start, da.epsilon_start),
        epsilon_end: tracker.pick("agent.epsilon_end", ra.epsilon_end, da.epsilon_end),
        epsilon_decay: tracker.pick("agent.epsilon_decay", ra.epsilon_decay, da.epsilon_decay),
        grad_clip_norm: tracker.pick("agent.grad_clip_norm", ra.grad_clip_norm, da.grad_clip_norm),
        episodes: tracker.pick("agent.episodes", ra.episodes, da.episodes),
        horizon: tracker.pick("agent.horizon", ra.horizon, da.horizon),
    };

    let rr = raw.run.unwrap_or_default();
    let kind_explicit = rr.scenario_kind.is_some();
    let run_horizon = tracker.pick("run.horizon", rr.horizon, defaults.horizon);
    let scheduler = tracker.pick("run.scheduler", rr.scheduler, defaults.scheduler);
    let scenario_kind = tracker.pick("run.scenario_kind", rr.scenario_kind, defaults.scenario_kind);
    let trace_path = tracker.pick("run.trace_path", rr.trace_path.map(Some), None);
    let stream_trace_path = tracker.pick("run.stream_trace_path", rr.stream_trace_path.map(Some), None);
    let checkpoint_path = tracker.pick("run.checkpoint_path", rr.checkpoint_path.map(Some), None);

    let mut config = ScenarioConfig {
        dynamics,
        streams,
        control,
        agent,
        horizon: run_horizon,
        scheduler,
        scenario_kind,
        trace_path,
        stream_trace_path,
        checkpoint_path,
    };

    // A named scenario family fills in dynamics the file left unset.
    if kind_explicit {
        let derived = make_scenario(scenario_kind, &config);
        if !walk_explicit {
            config.dynamics.walk_step_fraction = derived.dynamics.walk_step_fraction;
        }
        if !loss_explicit {
            config.dynamics.loss_range = derived.dynamics.loss_range;
        }
        if !bandwidth_explicit {
            config.dynamics.bandwidth_range = derived.dynamics.bandwidth_range;
        }
    }

    config.validate()?;
    Ok(ParsedConfig { config, provenance: tracker.provenance })
}

/// Serialize a scenario back to a TOML document with every field explicit.
pub fn serialize_config(cfg: &ScenarioConfig) -> Result<String, ConfigError> {
    let doc = ConfigDocument {
        dynamics: cfg.dynamics.clone(),
        streams: cfg.streams.clone(),
        control: cfg.control.clone(),
        agent: cfg.agent.clone(),
        run: RunSection {
            horizon: cfg.horizon,
            scheduler: cfg.scheduler,
            scenario_kind: cfg.scenario_kind,
            trace_path: cfg.trace_path.clone(),
            stream_trace_path: cfg.stream_trace_path.clone(),
            checkpoint_path: cfg.checkpoint_path.clone(),
        },
    };
    Ok(toml::to_string_pretty(&doc)?)
}
