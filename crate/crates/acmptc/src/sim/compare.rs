//! Paired multi-seed scheduler comparison.
//!
//! Every (scheduler, seed) cell replays the identical exogenous network
//! trajectory — only the decisions differ — so per-seed differences are
//! paired observations. When the DRL scheduler participates, its agents are
//! trained once (seeded by the scenario's own dynamics seed) and reused
//! greedily across all evaluation seeds.

use serde::{Deserialize, Serialize};

use super::episode::{run_episode_with_agents, train_agents};
use super::{EpisodeResult, ScenarioConfig, SchedulerKind, SimError};
use crate::drl::Agent;

/// Episode-level means for one (scheduler, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mean_delivered_mbps: f64,
    pub mean_latency_ms: f64,
    pub mean_loss: f64,
    pub mean_qos: f64,
    pub mean_utility: f64,
}

/// One scheduler's results across all seeds.
#[derive(Debug, Clone)]
pub struct SchedulerColumn {
    pub scheduler: SchedulerKind,
    pub per_seed: Vec<SeedSummary>,
    pub episodes: Vec<EpisodeResult>,
}

impl SchedulerColumn {
    pub fn mean_delivered_mbps(&self) -> f64 {
        mean(self.per_seed.iter().map(|s| s.mean_delivered_mbps))
    }

    pub fn mean_utility(&self) -> f64 {
        mean(self.per_seed.iter().map(|s| s.mean_utility))
    }

    pub fn mean_latency_ms(&self) -> f64 {
        mean(self.per_seed.iter().map(|s| s.mean_latency_ms))
    }

    pub fn mean_loss(&self) -> f64 {
        mean(self.per_seed.iter().map(|s| s.mean_loss))
    }

    pub fn mean_qos(&self) -> f64 {
        mean(self.per_seed.iter().map(|s| s.mean_qos))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Results of running several schedulers over the same seeds.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub columns: Vec<SchedulerColumn>,
    /// True when all schedulers observed identical exogenous trajectories
    /// on every seed.
    pub trajectories_paired: bool,
}

impl ComparisonReport {
    pub fn column(&self, kind: SchedulerKind) -> Option<&SchedulerColumn> {
        self.columns.iter().find(|c| c.scheduler == kind)
    }

    /// Per-seed differences `a - b` of a metric drawn from the seed
    /// summaries.
    pub fn paired_diff<F>(&self, a: SchedulerKind, b: SchedulerKind, metric: F) -> Vec<f64>
    where
        F: Fn(&SeedSummary) -> f64,
    {
        match (self.column(a), self.column(b)) {
            (Some(ca), Some(cb)) => {
                ca.per_seed.iter().zip(&cb.per_seed).map(|(x, y)| metric(x) - metric(y)).collect()
            }
            _ => Vec::new(),
        }
    }
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `n` fair coin flips. Ties should be dropped by the caller.
pub fn sign_test_p_value(wins: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut log_choose = 0.0f64; // ln C(n, 0)
    let mut p = 0.0f64;
    let ln2n = n as f64 * std::f64::consts::LN_2;
    for k in 0..=n {
        if k >= wins {
            p += (log_choose - ln2n).exp();
        }
        // ln C(n, k+1) = ln C(n, k) + ln(n - k) - ln(k + 1)
        if k < n {
            log_choose += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
        }
    }
    p.min(1.0)
}

/// Run every (scheduler, seed) pair on identical network trajectories.
pub fn run_comparison(
    cfg: &ScenarioConfig,
    schedulers: &[SchedulerKind],
    seeds: &[u64],
) -> Result<ComparisonReport, SimError> {
    if schedulers.is_empty() || seeds.is_empty() {
        return Err(SimError::InvalidScenario("need at least one scheduler and one seed".into()));
    }
    cfg.validate()?;
    let trained: Option<Vec<Agent>> = if schedulers.contains(&SchedulerKind::AcmptcDrl) {
        Some(train_agents(cfg, cfg.dynamics.seed)?.0)
    } else {
        None
    };
    let mut columns: Vec<SchedulerColumn> = schedulers
        .iter()
        .map(|&scheduler| SchedulerColumn { scheduler, per_seed: Vec::new(), episodes: Vec::new() })
        .collect();
    let mut trajectories_paired = true;
    for &seed in seeds {
        let mut checksum: Option<u64> = None;
        for (idx, &scheduler) in schedulers.iter().enumerate() {
            let mut run_cfg = cfg.clone();
            run_cfg.scheduler = scheduler;
            let agents = match scheduler {
                SchedulerKind::AcmptcDrl => trained.as_deref(),
                _ => None,
            };
            let episode = run_episode_with_agents(&run_cfg, seed, agents)?;
            match checksum {
                None => checksum = Some(episode.exogenous_checksum),
                Some(expected) => {
                    if episode.exogenous_checksum != expected {
                        trajectories_paired = false;
                    }
                }
            }
            let agg = &episode.summary.aggregate;
            columns[idx].per_seed.push(SeedSummary {
                seed,
                mean_delivered_mbps: agg.mean_delivered_mbps,
                mean_latency_ms: agg.mean_latency_ms,
                mean_loss: agg.mean_loss,
                mean_qos: agg.mean_qos,
                mean_utility: agg.mean_utility,
            });
            columns[idx].episodes.push(episode);
        }
    }
    Ok(ComparisonReport { seeds: seeds.to_vec(), columns, trajectories_paired })
}
