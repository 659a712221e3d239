//! Paired comparison of the schedulers over identical network trajectories.
//!
//! Every scheduler sees the same bandwidth/latency/loss walks and the same
//! background traffic on each seed, so per-seed differences isolate the
//! decision logic.
//!
//! ```bash
//! cargo run --release --example compare_schedulers
//! ```

use acmptc::export::format_real;
use acmptc::sim::{
    make_scenario, run_comparison, sign_test_p_value, ScenarioConfig, ScenarioKind, SchedulerKind,
};

fn main() {
    let mut base = ScenarioConfig { horizon: 400, ..Default::default() };
    base.agent.episodes = 40;
    base.agent.horizon = 150;
    let cfg = make_scenario(ScenarioKind::Variable, &base);
    let seeds: Vec<u64> = (0..5).collect();

    let schedulers =
        [SchedulerKind::Tcp, SchedulerKind::Mptcp, SchedulerKind::Acmptc, SchedulerKind::AcmptcDrl];
    println!("running {} schedulers x {} seeds (training the DRL agents first)...", schedulers.len(), seeds.len());
    let report = run_comparison(&cfg, &schedulers, &seeds).expect("valid scenario");

    println!();
    println!("scheduler    mean_mbps  mean_latency_ms  mean_loss  mean_utility");
    for column in &report.columns {
        println!(
            "{:<12} {:>9}  {:>15}  {:>9}  {:>12}",
            column.scheduler.name(),
            format_real(column.mean_delivered_mbps()),
            format_real(column.mean_latency_ms()),
            format_real(column.mean_loss()),
            format_real(column.mean_utility()),
        );
    }

    let diffs = report.paired_diff(SchedulerKind::Acmptc, SchedulerKind::Mptcp, |s| s.mean_delivered_mbps);
    let wins = diffs.iter().filter(|&&d| d > 0.0).count();
    let n = diffs.iter().filter(|&&d| d != 0.0).count();
    println!();
    println!(
        "acmptc vs mptcp throughput: wins {wins}/{n}, paired mean diff {} Mbps, sign-test p = {}",
        format_real(diffs.iter().sum::<f64>() / diffs.len() as f64),
        format_real(sign_test_p_value(wins, n.max(1))),
    );
    println!("trajectories paired: {}", report.trajectories_paired);
}
