//! Adaptive multi-path control laws.
//!
//! This is the decision layer that sits between the raw network state and
//! the traffic actually offered each step: weighted path scoring and subset
//! selection, threshold-triggered reallocation away from congested, slow,
//! or lossy paths, the piecewise congestion-window law plus its
//! rate-tracking correction, per-path bandwidth allocation with
//! demand-proportional sharing, the experience/QoS scores, the feedback
//! metric, the scalar utility, and the constraint diagnostics.
//!
//! All operations are pure functions over explicit state.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{NetworkState, PathState};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("expected rate must be positive, got {0}")]
    NonPositiveExpectedRate(f64),
    #[error("RTT must be positive, got {0}")]
    NonPositiveRtt(f64),
    #[error("invalid control parameter {field}: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

/// Static description of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub stream_id: u32,
    /// Required data rate in Mbps.
    pub expected_rate_mbps: f64,
    /// Weight of this stream's traffic deviation in the shared cwnd law.
    pub weight_gamma: f64,
    /// Cardinality cap on the selected path set.
    pub max_paths: usize,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !self.expected_rate_mbps.is_finite() || self.expected_rate_mbps <= 0.0 {
            return Err(ControlError::NonPositiveExpectedRate(self.expected_rate_mbps));
        }
        if !self.weight_gamma.is_finite() || self.weight_gamma < 0.0 {
            return Err(ControlError::InvalidParam {
                field: "weight_gamma",
                reason: format!("must be finite and non-negative, got {}", self.weight_gamma),
            });
        }
        if self.max_paths == 0 {
            return Err(ControlError::InvalidParam {
                field: "max_paths",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Mutable per-stream control state.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    pub assigned_paths: BTreeSet<usize>,
    /// Congestion window per assigned path, Mbit, floored at 1.
    pub cwnd_mbit: BTreeMap<usize, f64>,
    /// Delivered rate measured on the previous step.
    pub actual_rate_mbps: f64,
    pub rate_ewma_mbps: f64,
    /// Traffic deviation from typical behavior, from the previous step.
    pub deviation: f64,
    /// Bandwidth granted per path on the previous step.
    pub used_bw_mbps: BTreeMap<usize, f64>,
    /// User-experience score in [0, 1].
    pub experience: f64,
    /// QoS score in [0, 1].
    pub qos: f64,
}

impl StreamState {
    /// Fresh state on `assigned` paths with the given per-path windows.
    /// The rate EWMA starts at the expected rate so the first deviations
    /// measure distance from the requirement, not from zero.
    pub fn new(assigned: BTreeSet<usize>, cwnd_mbit: BTreeMap<usize, f64>, expected_rate_mbps: f64) -> Self {
        Self {
            assigned_paths: assigned,
            cwnd_mbit,
            actual_rate_mbps: 0.0,
            rate_ewma_mbps: expected_rate_mbps,
            deviation: 0.0,
            used_bw_mbps: BTreeMap::new(),
            experience: 0.0,
            qos: 0.0,
        }
    }

    pub fn min_cwnd(&self) -> f64 {
        self.cwnd_mbit.values().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Smoothing factor of the per-stream rate EWMA.
pub const RATE_EWMA_ALPHA: f64 = 0.2;

/// Traffic deviation: relative gap between the measured rate and its EWMA,
/// with the denominator floored at 1 Mbps.
pub fn traffic_deviation(actual_rate_mbps: f64, rate_ewma_mbps: f64) -> f64 {
    (actual_rate_mbps - rate_ewma_mbps) / rate_ewma_mbps.max(1.0)
}

pub fn advance_rate_ewma(rate_ewma_mbps: f64, actual_rate_mbps: f64) -> f64 {
    RATE_EWMA_ALPHA * actual_rate_mbps + (1.0 - RATE_EWMA_ALPHA) * rate_ewma_mbps
}

/// All controller weights and thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Path-score bandwidth weight.
    pub sel_alpha: f64,
    /// Path-score latency weight.
    pub sel_beta: f64,
    /// Path-score loss weight.
    pub sel_gamma: f64,
    /// cwnd growth scale below the loss threshold.
    pub cwnd_inc_alpha: f64,
    /// cwnd decay scale at or above the loss threshold.
    pub cwnd_dec_beta: f64,
    /// Rate-tracking cwnd correction scale.
    pub rate_delta: f64,
    /// Utility/reward weight on normalized bandwidth.
    pub util_w_b: f64,
    /// Utility/reward weight on normalized latency.
    pub util_w_l: f64,
    /// Utility/reward weight on normalized loss.
    pub util_w_p: f64,
    /// Utility/reward weight on QoS.
    pub util_w_q: f64,
    /// Feedback sensitivity.
    pub eta: f64,
    /// Desired experience level fed to the feedback metric.
    pub target_tau: f64,
    pub congestion_threshold: f64,
    pub rtt_threshold_ms: f64,
    pub latency_threshold_ms: f64,
    pub loss_threshold: f64,
    /// Loss normalization ceiling and the hard per-stream loss bound.
    pub loss_max: f64,
    /// Latency normalization ceiling and the hard per-stream latency bound.
    pub latency_max_ms: f64,
    pub qos_min: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            sel_alpha: 1.0,
            sel_beta: 1.0,
            sel_gamma: 100.0,
            cwnd_inc_alpha: 1.0,
            cwnd_dec_beta: 0.5,
            rate_delta: 1.0,
            util_w_b: 0.7,
            util_w_l: 0.2,
            util_w_p: 0.1,
            util_w_q: 0.0,
            eta: 0.1,
            target_tau: 0.9,
            congestion_threshold: 0.8,
            rtt_threshold_ms: 120.0,
            latency_threshold_ms: 100.0,
            loss_threshold: 0.03,
            loss_max: 0.05,
            latency_max_ms: 100.0,
            qos_min: 0.5,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        let nonneg = [
            ("sel_alpha", self.sel_alpha),
            ("sel_beta", self.sel_beta),
            ("sel_gamma", self.sel_gamma),
            ("cwnd_inc_alpha", self.cwnd_inc_alpha),
            ("cwnd_dec_beta", self.cwnd_dec_beta),
            ("rate_delta", self.rate_delta),
            ("util_w_b", self.util_w_b),
            ("util_w_l", self.util_w_l),
            ("util_w_p", self.util_w_p),
            ("util_w_q", self.util_w_q),
        ];
        for (field, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(ControlError::InvalidParam {
                    field,
                    reason: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.congestion_threshold) {
            return Err(ControlError::InvalidParam {
                field: "congestion_threshold",
                reason: format!("must lie in [0, 1], got {}", self.congestion_threshold),
            });
        }
        if !(0.0..=1.0).contains(&self.loss_threshold) {
            return Err(ControlError::InvalidParam {
                field: "loss_threshold",
                reason: format!("must lie in [0, 1], got {}", self.loss_threshold),
            });
        }
        if !(0.0..=1.0).contains(&self.loss_max) || self.loss_max == 0.0 {
            return Err(ControlError::InvalidParam {
                field: "loss_max",
                reason: format!("must lie in (0, 1], got {}", self.loss_max),
            });
        }
        if !self.latency_max_ms.is_finite() || self.latency_max_ms <= 0.0 {
            return Err(ControlError::InvalidParam {
                field: "latency_max_ms",
                reason: format!("must be positive, got {}", self.latency_max_ms),
            });
        }
        if !self.rtt_threshold_ms.is_finite() || self.rtt_threshold_ms <= 0.0 || !self.latency_threshold_ms.is_finite() || self.latency_threshold_ms <= 0.0 {
            return Err(ControlError::InvalidParam {
                field: "rtt_threshold_ms/latency_threshold_ms",
                reason: "thresholds must be positive".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.qos_min) {
            return Err(ControlError::InvalidParam {
                field: "qos_min",
                reason: format!("must lie in [0, 1], got {}", self.qos_min),
            });
        }
        Ok(())
    }
}

/// Feedback value for one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackSignal {
    pub value: f64,
    pub path_id: usize,
}

/// Weighted path score: `alpha * B - beta * L - gamma * rho`.
pub fn score_path(path: &PathState, p: &ControlParams) -> f64 {
    p.sel_alpha * path.bandwidth_mbps - p.sel_beta * path.latency_ms - p.sel_gamma * path.loss_rate
}

/// Select the score-sum-maximizing subset of at most `max_paths` paths.
///
/// Exhaustive over all non-empty subsets for up to 12 paths, greedy top-k
/// by score beyond that. At least the single best path is always returned,
/// even when every score is negative. Ties break to the lexicographically
/// smallest path-id set.
pub fn select_paths(stream: &StreamSpec, network: &NetworkState, p: &ControlParams) -> BTreeSet<usize> {
    let scores: Vec<f64> = network.paths.iter().map(|path| score_path(path, p)).collect();
    let n = scores.len();
    let cap = stream.max_paths.max(1);
    if n <= 12 {
        let mut best_sum = f64::NEG_INFINITY;
        let mut best_set: Vec<usize> = Vec::new();
        for mask in 1u32..(1u32 << n) {
            if (mask.count_ones() as usize) > cap {
                continue;
            }
            let mut sum = 0.0;
            let mut set = Vec::with_capacity(cap);
            for (i, score) in scores.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    sum += score;
                    set.push(i);
                }
            }
            if sum > best_sum || (sum == best_sum && set < best_set) {
                best_sum = sum;
                best_set = set;
            }
        }
        best_set.into_iter().collect()
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let positive: Vec<usize> = order.iter().copied().filter(|&i| scores[i] > 0.0).take(cap).collect();
        if positive.is_empty() {
            std::iter::once(order[0]).collect()
        } else {
            positive.into_iter().collect()
        }
    }
}

/// Outcome of a threshold-triggered reallocation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reallocation {
    /// Path the stream should use after the check (may equal the input).
    pub target: usize,
    /// The threshold fired but there was no alternative path to move to.
    pub no_alternative: bool,
}

impl Reallocation {
    pub fn moved_from(&self, current: usize) -> bool {
        self.target != current
    }
}

fn argmin_alternative<F>(network: &NetworkState, current: usize, key: F) -> Option<usize>
where
    F: Fn(&PathState) -> (f64, f64),
{
    network
        .paths
        .iter()
        .filter(|path| path.path_id != current)
        .min_by(|a, b| {
            let (a1, a2) = key(a);
            let (b1, b2) = key(b);
            a1.partial_cmp(&b1)
                .unwrap()
                .then(a2.partial_cmp(&b2).unwrap())
                .then(a.path_id.cmp(&b.path_id))
        })
        .map(|path| path.path_id)
}

/// Move off `current` when its congestion exceeds the threshold, to the
/// least-congested alternative (ties to the lowest index).
pub fn reallocate_on_congestion(current: usize, network: &NetworkState, p: &ControlParams) -> Reallocation {
    if network.paths[current].congestion <= p.congestion_threshold {
        return Reallocation { target: current, no_alternative: false };
    }
    match argmin_alternative(network, current, |path| (path.congestion, 0.0)) {
        Some(target) => Reallocation { target, no_alternative: false },
        None => Reallocation { target: current, no_alternative: true },
    }
}

/// Move off `current` when its RTT or latency exceeds the thresholds, to
/// the alternative minimizing `(RTT, latency)` lexicographically.
pub fn reallocate_on_delay(current: usize, network: &NetworkState, p: &ControlParams) -> Reallocation {
    let path = &network.paths[current];
    if path.rtt_ms <= p.rtt_threshold_ms && path.latency_ms <= p.latency_threshold_ms {
        return Reallocation { target: current, no_alternative: false };
    }
    match argmin_alternative(network, current, |path| (path.rtt_ms, path.latency_ms)) {
        Some(target) => Reallocation { target, no_alternative: false },
        None => Reallocation { target: current, no_alternative: true },
    }
}

/// Move off `current` when its loss rate exceeds the threshold, to the
/// lowest-loss alternative (ties to the lowest index).
pub fn reallocate_on_loss(current: usize, network: &NetworkState, p: &ControlParams) -> Reallocation {
    if network.paths[current].loss_rate <= p.loss_threshold {
        return Reallocation { target: current, no_alternative: false };
    }
    match argmin_alternative(network, current, |path| (path.loss_rate, 0.0)) {
        Some(target) => Reallocation { target, no_alternative: false },
        None => Reallocation { target: current, no_alternative: true },
    }
}

/// Piecewise congestion-window update.
///
/// Below the loss threshold the window grows by
/// `alpha * (1 - loss - deviation_sum)`; otherwise it shrinks
/// multiplicatively by `beta * cwnd * (loss + deviation_sum)`. The result
/// never drops below 1 Mbit.
pub fn update_cwnd(cwnd: f64, path_loss: f64, deviation_sum: f64, p: &ControlParams) -> f64 {
    let next = if path_loss < p.loss_threshold {
        cwnd + p.cwnd_inc_alpha * (1.0 - path_loss - deviation_sum)
    } else {
        let zeta = path_loss + deviation_sum;
        cwnd - p.cwnd_dec_beta * cwnd * zeta
    };
    next.max(1.0)
}

/// Rate-tracking window correction:
/// `cwnd + delta * (actual / expected - 1)`, floored at 1.
pub fn adjust_cwnd_rate(cwnd: f64, actual_rate: f64, expected_rate: f64, p: &ControlParams) -> Result<f64, ControlError> {
    if !expected_rate.is_finite() || expected_rate <= 0.0 {
        return Err(ControlError::NonPositiveExpectedRate(expected_rate));
    }
    Ok((cwnd + p.rate_delta * (actual_rate / expected_rate - 1.0)).max(1.0))
}

/// Bandwidth a window supports on a path, capped at the capacity left over
/// by other users: `min(cwnd / rtt, capacity - others_usage)`, floored at 0.
pub fn allocate_bandwidth(cwnd_mbit: f64, rtt_s: f64, path_capacity_mbps: f64, others_usage_mbps: f64) -> Result<f64, ControlError> {
    if !rtt_s.is_finite() || rtt_s <= 0.0 {
        return Err(ControlError::NonPositiveRtt(rtt_s));
    }
    Ok((cwnd_mbit / rtt_s).min(path_capacity_mbps - others_usage_mbps).max(0.0))
}

/// Target of a headroom-driven reallocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandwidthTarget {
    pub target: usize,
    /// Every path's headroom was zero (or negative).
    pub saturated: bool,
}

/// Path with the most spare capacity, given per-path usage (ties to the
/// lowest index).
pub fn reallocate_bandwidth(network: &NetworkState, usage_per_path: &[f64]) -> BandwidthTarget {
    debug_assert_eq!(usage_per_path.len(), network.n_paths());
    let mut best = 0usize;
    let mut best_headroom = f64::NEG_INFINITY;
    for (i, path) in network.paths.iter().enumerate() {
        let headroom = path.capacity_mbps - usage_per_path.get(i).copied().unwrap_or(0.0);
        if headroom > best_headroom {
            best_headroom = headroom;
            best = i;
        }
    }
    BandwidthTarget { target: best, saturated: best_headroom <= 0.0 }
}

/// Feedback metric: `eta * (target - experience)`.
pub fn feedback_metric(eta: f64, target: f64, experience: f64) -> f64 {
    eta * (target - experience)
}

/// User-experience score in [0, 1]:
/// rate satisfaction, discounted by square-root latency and loss penalties
/// relative to their normalization ceilings.
pub fn experience_score(
    delivered_rate: f64,
    expected_rate: f64,
    latency_ms: f64,
    loss_rate: f64,
    p: &ControlParams,
) -> Result<f64, ControlError> {
    if !expected_rate.is_finite() || expected_rate <= 0.0 {
        return Err(ControlError::NonPositiveExpectedRate(expected_rate));
    }
    let rate = (delivered_rate / expected_rate).clamp(0.0, 1.0);
    let latency_term = (1.0 - (latency_ms / p.latency_max_ms).min(1.0)).max(0.0).sqrt();
    let loss_term = (1.0 - (loss_rate / p.loss_max).min(1.0)).max(0.0).sqrt();
    Ok(rate * latency_term * loss_term)
}

/// QoS score in [0, 1]: 0.5 rate satisfaction + 0.3 latency headroom +
/// 0.2 loss headroom. A non-positive expected rate counts as satisfied.
pub fn qos_score(delivered_rate: f64, expected_rate: f64, latency_ms: f64, loss_rate: f64, p: &ControlParams) -> f64 {
    let rate = if expected_rate > 0.0 {
        (delivered_rate / expected_rate).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let latency_term = 1.0 - (latency_ms / p.latency_max_ms).clamp(0.0, 1.0);
    let loss_term = 1.0 - (loss_rate / p.loss_max).clamp(0.0, 1.0);
    0.5 * rate + 0.3 * latency_term + 0.2 * loss_term
}

/// Scalar utility of normalized stream metrics:
/// `w_B * b - w_L * l - w_P * rho + w_Q * qos`.
///
/// This is also the reward handed to the learning agents.
pub fn utility(bandwidth_norm: f64, latency_norm: f64, loss_norm: f64, qos: f64, p: &ControlParams) -> f64 {
    p.util_w_b * bandwidth_norm - p.util_w_l * latency_norm - p.util_w_p * loss_norm + p.util_w_q * qos
}

/// Per-stream snapshot handed to [`check_constraints`].
#[derive(Debug, Clone, PartialEq)]
pub struct StreamConstraintView {
    pub stream_id: u32,
    pub max_paths: usize,
    pub assigned_paths: BTreeSet<usize>,
    /// Bandwidth allocated to this stream per path, Mbps.
    pub allocated_mbps: BTreeMap<usize, f64>,
    pub latency_ms: f64,
    pub loss_rate: f64,
    pub qos: f64,
}

/// One violated constraint, with enough context to report it.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintViolation {
    /// Total allocation on a path exceeds its capacity.
    BandwidthCap { path_id: usize, allocated_mbps: f64, capacity_mbps: f64, excess_mbps: f64 },
    /// Stream latency above the hard bound.
    LatencyBound { stream_id: u32, latency_ms: f64, max_ms: f64 },
    /// Stream loss above the hard bound.
    LossBound { stream_id: u32, loss_rate: f64, max: f64 },
    /// Stream QoS below the floor (the floor itself is acceptable).
    QosFloor { stream_id: u32, qos: f64, min: f64 },
    /// Assigned paths differ from the score-maximizing selection.
    PathAssignment { stream_id: u32, assigned: BTreeSet<usize>, optimal: BTreeSet<usize> },
}

/// Diagnostic pass over all hard constraints: per-path bandwidth caps,
/// per-stream latency/loss bounds, the QoS floor, and agreement of the
/// assigned paths with the score-maximizing selection. Returns every
/// violation found; an empty list means the state is feasible.
pub fn check_constraints(
    streams: &[StreamConstraintView],
    network: &NetworkState,
    p: &ControlParams,
) -> Vec<ConstraintViolation> {
    let mut violations = Vec::new();
    let mut allocated = vec![0.0f64; network.n_paths()];
    for view in streams {
        for (&path, &mbps) in &view.allocated_mbps {
            if path < allocated.len() {
                allocated[path] += mbps;
            }
        }
    }
    for (i, path) in network.paths.iter().enumerate() {
        if allocated[i] > path.capacity_mbps {
            violations.push(ConstraintViolation::BandwidthCap {
                path_id: i,
                allocated_mbps: allocated[i],
                capacity_mbps: path.capacity_mbps,
                excess_mbps: allocated[i] - path.capacity_mbps,
            });
        }
    }
    for view in streams {
        if view.latency_ms > p.latency_max_ms {
            violations.push(ConstraintViolation::LatencyBound {
                stream_id: view.stream_id,
                latency_ms: view.latency_ms,
                max_ms: p.latency_max_ms,
            });
        }
        if view.loss_rate > p.loss_max {
            violations.push(ConstraintViolation::LossBound {
                stream_id: view.stream_id,
                loss_rate: view.loss_rate,
                max: p.loss_max,
            });
        }
        if view.qos < p.qos_min {
            violations.push(ConstraintViolation::QosFloor {
                stream_id: view.stream_id,
                qos: view.qos,
                min: p.qos_min,
            });
        }
        let spec = StreamSpec {
            stream_id: view.stream_id,
            expected_rate_mbps: 1.0,
            weight_gamma: 0.0,
            max_paths: view.max_paths,
        };
        let optimal = select_paths(&spec, network, p);
        if optimal != view.assigned_paths {
            violations.push(ConstraintViolation::PathAssignment {
                stream_id: view.stream_id,
                assigned: view.assigned_paths.clone(),
                optimal,
            });
        }
    }
    violations
}

/// Split a path's headroom among competing streams.
///
/// The headroom is divided proportionally to per-stream demand with each
/// share capped at its demand; leftover from capped shares is redistributed
/// proportionally among still-unsatisfied streams until a fixpoint. The
/// returned shares never sum above the headroom (enforced exactly by a
/// final sequential clip) and each share never exceeds its demand; when the
/// total demand fits in the headroom every stream is fully satisfied.
pub fn share_path(demands: &[f64], headroom_mbps: f64) -> Vec<f64> {
    let n = demands.len();
    let mut shares = vec![0.0f64; n];
    let mut remaining = headroom_mbps.max(0.0);
    if n == 0 || remaining <= 0.0 {
        return shares;
    }
    for _round in 0..=n {
        if remaining <= 0.0 {
            break;
        }
        let unmet: Vec<usize> = (0..n).filter(|&i| demands[i] - shares[i] > 1e-12).collect();
        if unmet.is_empty() {
            break;
        }
        let weight_sum: f64 = unmet.iter().map(|&i| demands[i]).sum();
        if weight_sum <= 0.0 {
            break;
        }
        let mut granted_any = false;
        let mut granted_total = 0.0;
        for &i in &unmet {
            let proportional = remaining * demands[i] / weight_sum;
            let grant = proportional.min(demands[i] - shares[i]);
            if grant > 0.0 {
                shares[i] += grant;
                granted_total += grant;
                granted_any = true;
            }
        }
        remaining -= granted_total;
        if !granted_any {
            break;
        }
    }
    // Exact conservation: never hand out more than the headroom, even under
    // float round-off.
    let mut running = 0.0f64;
    for share in &mut shares {
        let clipped = share.min(headroom_mbps - running).max(0.0);
        *share = clipped;
        running += clipped;
    }
    shares
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_network, DynamicsConfig};
    use crate::rng::{derive_rng, RngDomain};
    use proptest::prelude::*;
    use rand::Rng;

    fn path(id: usize, bandwidth: f64, latency: f64, loss: f64, congestion: f64) -> PathState {
        PathState {
            path_id: id,
            bandwidth_mbps: bandwidth,
            latency_ms: latency,
            rtt_ms: 2.0 * latency * (1.0 + congestion),
            loss_rate: loss,
            congestion,
            capacity_mbps: bandwidth.max(100.0),
        }
    }

    fn network(paths: Vec<PathState>) -> NetworkState {
        NetworkState { t: 0, paths }
    }

    fn params() -> ControlParams {
        ControlParams::default()
    }

    fn unit_weights() -> ControlParams {
        ControlParams { sel_alpha: 1.0, sel_beta: 1.0, sel_gamma: 1.0, ..params() }
    }

    #[test]
    fn score_path_hand_values() {
        let p0 = path(0, 50.0, 20.0, 0.01, 0.0);
        assert!((score_path(&p0, &unit_weights()) - 29.99).abs() < 1e-12);
        let zeroes = ControlParams { sel_alpha: 0.0, sel_beta: 0.0, sel_gamma: 0.0, ..params() };
        assert_eq!(score_path(&p0, &zeroes), 0.0);
        let only_bw = ControlParams { sel_alpha: 1.0, sel_beta: 0.0, sel_gamma: 0.0, ..params() };
        assert_eq!(score_path(&path(0, 73.5, 33.0, 0.04, 0.0), &only_bw), 73.5);
    }

    /// Rig a network whose three paths score (5, -3, 2) under unit weights:
    /// score = B - L - rho.
    fn scored_network() -> NetworkState {
        network(vec![
            path(0, 15.0, 10.0, 0.0, 0.0),
            path(1, 7.0, 10.0, 0.0, 0.0),
            path(2, 12.0, 10.0, 0.0, 0.0),
        ])
    }

    #[test]
    fn select_paths_drops_negative_scores() {
        let stream = StreamSpec { stream_id: 0, expected_rate_mbps: 10.0, weight_gamma: 1.0, max_paths: 3 };
        let got = select_paths(&stream, &scored_network(), &unit_weights());
        assert_eq!(got, BTreeSet::from([0, 2]));
    }

    #[test]
    fn select_paths_cardinality_one_takes_best() {
        let net = network(vec![path(0, 59.99, 30.0, 0.0, 0.0), path(1, 40.0, 30.0, 0.0, 0.0)]);
        let stream = StreamSpec { stream_id: 0, expected_rate_mbps: 10.0, weight_gamma: 1.0, max_paths: 1 };
        assert_eq!(select_paths(&stream, &net, &unit_weights()), BTreeSet::from([0]));
    }

    #[test]
    fn select_paths_tie_breaks_to_lowest_indices() {
        let net = network(vec![
            path(0, 50.0, 10.0, 0.0, 0.0),
            path(1, 50.0, 10.0, 0.0, 0.0),
            path(2, 50.0, 10.0, 0.0, 0.0),
        ]);
        let stream = StreamSpec { stream_id: 0, expected_rate_mbps: 10.0, weight_gamma: 1.0, max_paths: 2 };
        assert_eq!(select_paths(&stream, &net, &unit_weights()), BTreeSet::from([0, 1]));
    }

    #[test]
    fn select_paths_all_negative_returns_best_single() {
        let net = network(vec![path(0, 1.0, 50.0, 0.0, 0.0), path(1, 5.0, 50.0, 0.0, 0.0)]);
        let stream = StreamSpec { stream_id: 0, expected_rate_mbps: 10.0, weight_gamma: 1.0, max_paths: 3 };
        assert_eq!(select_paths(&stream, &net, &unit_weights()), BTreeSet::from([1]));
    }

    #[test]
    fn select_paths_greedy_branch_above_twelve_paths() {
        // 14 paths: scores B - L = 10*i - 40, positive for i >= 5, best at
        // the top indices
        let paths: Vec<PathState> = (0..14).map(|i| path(i, 10.0 * i as f64, 40.0, 0.0, 0.0)).collect();
        let net = network(paths);
        let stream = StreamSpec { stream_id: 0, expected_rate_mbps: 10.0, weight_gamma: 1.0, max_paths: 3 };
        assert_eq!(select_paths(&stream, &net, &unit_weights()), BTreeSet::from([11, 12, 13]));
        // everything negative: single best survives
        let paths: Vec<PathState> = (0..14).map(|i| path(i, i as f64, 50.0, 0.0, 0.0)).collect();
        let net = network(paths);
        assert_eq!(select_paths(&stream, &net, &unit_weights()), BTreeSet::from([13]));
        // fewer positive scores than the cap: only the positive ones
        let mut paths: Vec<PathState> = (0..14).map(|i| path(i, 1.0, 50.0, 0.0, 0.0)).collect();
        paths[4].bandwidth_mbps = 90.0;
        let net = network(paths);
        assert_eq!(select_paths(&stream, &net, &unit_weights()), BTreeSet::from([4]));
    }

    #[test]
    fn congestion_reallocation_cases() {
        let p = params();
        let net = network(vec![
            path(0, 50.0, 20.0, 0.0, 0.9),
            path(1, 50.0, 20.0, 0.0, 0.4),
            path(2, 50.0, 20.0, 0.0, 0.6),
        ]);
        let below = ControlParams { congestion_threshold: 0.95, ..p.clone() };
        assert_eq!(reallocate_on_congestion(0, &net, &below), Reallocation { target: 0, no_alternative: false });
        let fired = ControlParams { congestion_threshold: 0.5, ..p.clone() };
        assert_eq!(reallocate_on_congestion(0, &net, &fired).target, 1);
        // tie between alternatives goes to the lowest index
        let tie = network(vec![
            path(0, 50.0, 20.0, 0.0, 0.9),
            path(1, 50.0, 20.0, 0.0, 0.4),
            path(2, 50.0, 20.0, 0.0, 0.4),
        ]);
        assert_eq!(reallocate_on_congestion(0, &tie, &fired).target, 1);
        // single-path network raises the no-alternative flag
        let lone = network(vec![path(0, 50.0, 20.0, 0.0, 0.9)]);
        let r = reallocate_on_congestion(0, &lone, &fired);
        assert_eq!(r.target, 0);
        assert!(r.no_alternative);
    }

    #[test]
    fn delay_reallocation_cases() {
        let p = ControlParams { rtt_threshold_ms: 100.0, latency_threshold_ms: 100.0, ..params() };
        let mut net = network(vec![
            path(0, 50.0, 30.0, 0.0, 0.0),
            path(1, 50.0, 20.0, 0.0, 0.0),
            path(2, 50.0, 20.0, 0.0, 0.0),
        ]);
        net.paths[0].rtt_ms = 80.0;
        assert_eq!(reallocate_on_delay(0, &net, &p).target, 0);
        net.paths[0].rtt_ms = 150.0;
        net.paths[1].rtt_ms = 90.0;
        net.paths[2].rtt_ms = 120.0;
        assert_eq!(reallocate_on_delay(0, &net, &p).target, 1);
        // equal RTT falls through to latency as the second key
        net.paths[1].rtt_ms = 90.0;
        net.paths[2].rtt_ms = 90.0;
        net.paths[1].latency_ms = 40.0;
        net.paths[2].latency_ms = 20.0;
        assert_eq!(reallocate_on_delay(0, &net, &p).target, 2);
    }

    #[test]
    fn loss_reallocation_cases() {
        let p = ControlParams { loss_threshold: 0.05, ..params() };
        let net = network(vec![
            path(0, 50.0, 20.0, 0.01, 0.0),
            path(1, 50.0, 20.0, 0.02, 0.0),
            path(2, 50.0, 20.0, 0.04, 0.0),
        ]);
        assert_eq!(reallocate_on_loss(0, &net, &p).target, 0);
        let lossy = network(vec![
            path(0, 50.0, 20.0, 0.08, 0.0),
            path(1, 50.0, 20.0, 0.02, 0.0),
            path(2, 50.0, 20.0, 0.04, 0.0),
        ]);
        assert_eq!(reallocate_on_loss(0, &lossy, &p).target, 1);
        let tie = network(vec![
            path(0, 50.0, 20.0, 0.08, 0.0),
            path(1, 50.0, 20.0, 0.02, 0.0),
            path(2, 50.0, 20.0, 0.02, 0.0),
        ]);
        assert_eq!(reallocate_on_loss(0, &tie, &p).target, 1);
    }

    #[test]
    fn cwnd_update_hand_values() {
        let p = ControlParams { cwnd_inc_alpha: 1.0, cwnd_dec_beta: 0.5, loss_threshold: 0.05, ..params() };
        assert!((update_cwnd(10.0, 0.01, 0.0, &p) - 10.99).abs() < 1e-12);
        assert!((update_cwnd(10.0, 0.1, 0.0, &p) - 9.5).abs() < 1e-12);
        let harsh = ControlParams { cwnd_dec_beta: 1.0, loss_threshold: 0.05, ..params() };
        assert_eq!(update_cwnd(1.0, 1.0, 0.0, &harsh), 1.0);
    }

    #[test]
    fn cwnd_rate_adjustment_hand_values() {
        let p = ControlParams { rate_delta: 2.0, ..params() };
        assert_eq!(adjust_cwnd_rate(10.0, 10.0, 10.0, &p).unwrap(), 10.0);
        assert!((adjust_cwnd_rate(10.0, 15.0, 10.0, &p).unwrap() - 11.0).abs() < 1e-12);
        assert_eq!(adjust_cwnd_rate(1.0, 0.0, 10.0, &p).unwrap(), 1.0);
        assert!(adjust_cwnd_rate(10.0, 5.0, 0.0, &p).is_err());
    }

    #[test]
    fn bandwidth_allocation_hand_values() {
        assert!((allocate_bandwidth(1.0, 0.1, 100.0, 95.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((allocate_bandwidth(1.0, 0.1, 100.0, 0.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(allocate_bandwidth(1.0, 0.1, 100.0, 100.0).unwrap(), 0.0);
        assert!(allocate_bandwidth(1.0, 0.0, 100.0, 0.0).is_err());
    }

    #[test]
    fn bandwidth_reallocation_argmax() {
        let net = network(vec![
            path(0, 100.0, 20.0, 0.0, 0.0),
            path(1, 100.0, 20.0, 0.0, 0.0),
            path(2, 100.0, 20.0, 0.0, 0.0),
        ]);
        let t = reallocate_bandwidth(&net, &[95.0, 60.0, 88.0]);
        assert_eq!(t, BandwidthTarget { target: 1, saturated: false });
        let sat = reallocate_bandwidth(&net, &[100.0, 100.0, 100.0]);
        assert_eq!(sat, BandwidthTarget { target: 0, saturated: true });
        let lone = network(vec![path(0, 100.0, 20.0, 0.0, 0.0)]);
        assert_eq!(reallocate_bandwidth(&lone, &[0.0]).target, 0);
    }

    #[test]
    fn feedback_metric_hand_values() {
        assert!((feedback_metric(0.1, 0.9, 0.7) - 0.02).abs() < 1e-12);
        assert_eq!(feedback_metric(0.1, 0.8, 0.8), 0.0);
        assert_eq!(feedback_metric(0.0, 0.9, 0.1), 0.0);
    }

    #[test]
    fn experience_score_hand_values() {
        let p = params();
        assert_eq!(experience_score(20.0, 20.0, 0.0, 0.0, &p).unwrap(), 1.0);
        assert_eq!(experience_score(0.0, 20.0, 10.0, 0.01, &p).unwrap(), 0.0);
        let half = experience_score(20.0, 20.0, 50.0, 0.0, &p).unwrap();
        assert!((half - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(experience_score(1.0, 0.0, 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn qos_score_hand_values() {
        let p = params();
        assert_eq!(qos_score(20.0, 20.0, 0.0, 0.0, &p), 1.0);
        assert!((qos_score(20.0, 20.0, 100.0, 0.05, &p) - 0.5).abs() < 1e-12);
        assert_eq!(qos_score(0.0, 20.0, 100.0, 0.05, &p), 0.0);
    }

    #[test]
    fn utility_hand_values() {
        let p = params(); // weights (0.7, 0.2, 0.1, 0)
        assert!((utility(1.0, 0.5, 0.0, 0.8, &p) - 0.6).abs() < 1e-12);
        assert_eq!(utility(0.0, 0.0, 0.0, 0.0, &p), 0.0);
        let proj = ControlParams { util_w_b: 1.0, util_w_l: 0.0, util_w_p: 0.0, util_w_q: 0.0, ..params() };
        assert_eq!(utility(0.42, 0.9, 0.9, 0.9, &proj), 0.42);
    }

    fn feasible_view(stream_id: u32) -> StreamConstraintView {
        StreamConstraintView {
            stream_id,
            max_paths: 3,
            assigned_paths: BTreeSet::new(),
            allocated_mbps: BTreeMap::new(),
            latency_ms: 20.0,
            loss_rate: 0.01,
            qos: 0.9,
        }
    }

    #[test]
    fn constraints_feasible_state_is_clean() {
        let net = network(vec![path(0, 100.0, 20.0, 0.0, 0.0), path(1, 80.0, 25.0, 0.0, 0.0)]);
        let p = params();
        let mut view = feasible_view(0);
        view.assigned_paths = select_paths(
            &StreamSpec { stream_id: 0, expected_rate_mbps: 10.0, weight_gamma: 0.0, max_paths: 3 },
            &net,
            &p,
        );
        view.allocated_mbps.insert(0, 10.0);
        assert!(check_constraints(&[view], &net, &p).is_empty());
    }

    #[test]
    fn constraints_report_oversubscription_exactly_once() {
        let net = network(vec![path(0, 100.0, 20.0, 0.0, 0.0), path(1, 80.0, 25.0, 0.0, 0.0)]);
        let p = params();
        let mut view = feasible_view(0);
        view.assigned_paths = select_paths(
            &StreamSpec { stream_id: 0, expected_rate_mbps: 10.0, weight_gamma: 0.0, max_paths: 3 },
            &net,
            &p,
        );
        view.allocated_mbps.insert(0, 101.0);
        let violations = check_constraints(&[view], &net, &p);
        assert_eq!(violations.len(), 1);
        match &violations[0] {
            ConstraintViolation::BandwidthCap { path_id, excess_mbps, .. } => {
                assert_eq!(*path_id, 0);
                assert!((excess_mbps - 1.0).abs() < 1e-9);
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn qos_floor_is_inclusive() {
        let net = network(vec![path(0, 100.0, 20.0, 0.0, 0.0)]);
        let p = params();
        let mut view = feasible_view(0);
        view.assigned_paths = BTreeSet::from([0]);
        view.max_paths = 1;
        view.qos = p.qos_min;
        assert!(check_constraints(&[view], &net, &p).is_empty());
    }

    #[test]
    fn share_path_caps_single_stream_at_demand() {
        assert_eq!(share_path(&[10.0], 100.0), vec![10.0]);
    }

    #[test]
    fn share_path_splits_proportionally_when_oversubscribed() {
        let shares = share_path(&[30.0, 10.0], 20.0);
        assert!((shares[0] - 15.0).abs() < 1e-9, "{shares:?}");
        assert!((shares[1] - 5.0).abs() < 1e-9, "{shares:?}");
    }

    #[test]
    fn share_path_redistributes_capped_leftover() {
        // Demands fit partially: the small stream caps at its demand and the
        // leftover flows to the large one.
        let shares = share_path(&[5.0, 100.0], 110.0);
        assert!((shares[0] - 5.0).abs() < 1e-9, "{shares:?}");
        assert!((shares[1] - 100.0).abs() < 1e-9, "{shares:?}");
        let tight = share_path(&[5.0, 100.0], 20.0);
        let total: f64 = tight.iter().sum();
        assert!(total <= 20.0 + 1e-12);
        assert!(tight[0] <= 5.0 && tight[1] <= 100.0);
    }

    #[test]
    fn deviation_and_ewma() {
        assert_eq!(traffic_deviation(12.0, 10.0), 0.2);
        assert_eq!(traffic_deviation(0.5, 0.5), 0.0);
        // denominator floored at 1
        assert_eq!(traffic_deviation(0.6, 0.1), 0.5);
        assert!((advance_rate_ewma(10.0, 20.0) - 12.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn realloc_identity_below_threshold(seed in 0u64..300) {
            let mut rng = derive_rng(seed, RngDomain::Dynamics);
            let net = init_network(&DynamicsConfig::default(), &mut rng).unwrap();
            let p = ControlParams {
                congestion_threshold: 1.0,
                rtt_threshold_ms: 1e9,
                latency_threshold_ms: 1e9,
                loss_threshold: 1.0,
                ..params()
            };
            for current in 0..net.n_paths() {
                prop_assert_eq!(reallocate_on_congestion(current, &net, &p).target, current);
                prop_assert_eq!(reallocate_on_delay(current, &net, &p).target, current);
                prop_assert_eq!(reallocate_on_loss(current, &net, &p).target, current);
            }
        }

        #[test]
        fn cwnd_never_below_one(
            cwnd in 1.0f64..100.0,
            losses in proptest::collection::vec((0.0f64..1.0, -3.0f64..3.0), 1..50),
        ) {
            let p = params();
            let mut w = cwnd;
            for (loss, dev) in losses {
                w = update_cwnd(w, loss, dev, &p);
                prop_assert!(w >= 1.0);
                w = adjust_cwnd_rate(w, dev.abs() * 10.0, 10.0, &p).unwrap();
                prop_assert!(w >= 1.0);
            }
        }

        #[test]
        fn sequential_allocation_respects_capacity(
            windows in proptest::collection::vec((1.0f64..200.0, 0.01f64..0.5), 1..10),
        ) {
            let capacity = 100.0;
            let mut usage = 0.0;
            for (cwnd, rtt) in windows {
                let share = allocate_bandwidth(cwnd, rtt, capacity, usage).unwrap();
                usage += share;
                prop_assert!(usage <= capacity + 1e-9);
            }
        }

        #[test]
        fn utility_is_monotone(
            b in 0.0f64..1.0, l in 0.0f64..1.0, r in 0.0f64..1.0, q in 0.0f64..1.0,
            db in 0.0f64..0.5, dl in 0.0f64..0.5, dr in 0.0f64..0.5, dq in 0.0f64..0.5,
        ) {
            let p = ControlParams { util_w_q: 0.3, ..params() };
            let base = utility(b, l, r, q, &p);
            prop_assert!(utility(b + db, l, r, q, &p) >= base - 1e-12);
            prop_assert!(utility(b, l + dl, r, q, &p) <= base + 1e-12);
            prop_assert!(utility(b, l, r + dr, q, &p) <= base + 1e-12);
            prop_assert!(utility(b, l, r, q + dq, &p) >= base - 1e-12);
        }

        #[test]
        fn feedback_sign_tracks_experience_gap(target in 0.0f64..1.0, xp in 0.0f64..1.0) {
            let f = feedback_metric(0.25, target, xp);
            if xp < target {
                prop_assert!(f > 0.0);
            } else if xp > target {
                prop_assert!(f < 0.0);
            } else {
                prop_assert_eq!(f, 0.0);
            }
        }

        #[test]
        fn share_path_invariants(
            demands in proptest::collection::vec(0.0f64..60.0, 1..8),
            headroom in 0.0f64..200.0,
        ) {
            let shares = share_path(&demands, headroom);
            let total: f64 = shares.iter().sum();
            prop_assert!(total <= headroom + 1e-9);
            for (share, demand) in shares.iter().zip(&demands) {
                prop_assert!(*share <= demand + 1e-9);
                prop_assert!(*share >= 0.0);
            }
            if demands.iter().sum::<f64>() <= headroom {
                for (share, demand) in shares.iter().zip(&demands) {
                    prop_assert!((share - demand).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn realloc_moves_to_brute_force_argmin(seed in 0u64..300) {
            let mut rng = derive_rng(seed, RngDomain::Dynamics);
            let mut net = init_network(&DynamicsConfig::default(), &mut rng).unwrap();
            for p in &mut net.paths {
                p.congestion = rng.gen_range(0.0..1.0);
            }
            let p = ControlParams { congestion_threshold: 0.2, ..params() };
            for current in 0..net.n_paths() {
                if net.paths[current].congestion > p.congestion_threshold {
                    let r = reallocate_on_congestion(current, &net, &p);
                    prop_assert!(r.target != current);
                    let best = (0..net.n_paths())
                        .filter(|&k| k != current)
                        .min_by(|&a, &b| {
                            net.paths[a].congestion.partial_cmp(&net.paths[b].congestion).unwrap()
                                .then(a.cmp(&b))
                        })
                        .unwrap();
                    prop_assert_eq!(r.target, best);
                }
            }
        }
    }
}
