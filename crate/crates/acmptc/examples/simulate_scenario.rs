//! Run one adaptive-controller episode on the default scenario and print
//! the per-stream summary.
//!
//! ```bash
//! cargo run --example simulate_scenario
//! ```

use acmptc::export::format_real;
use acmptc::sim::{make_scenario, run_episode, ScenarioConfig, ScenarioKind};

fn main() {
    let base = ScenarioConfig { horizon: 300, ..Default::default() };
    let cfg = make_scenario(ScenarioKind::Variable, &base);

    let result = run_episode(&cfg, 7).expect("valid default scenario");

    println!("scheduler: {}", result.scheduler.name());
    println!("seed:      {}", result.seed);
    println!("steps:     {}", cfg.horizon);
    println!("records:   {}", result.records.len());
    println!("reallocations: {}", result.reallocations);
    println!();
    println!("stream  demand  mean_mbps  p95_latency_ms  mean_loss  mean_qos  mean_utility");
    for (stream_id, stats) in &result.summary.per_stream {
        let demand = cfg.streams.iter().find(|s| s.stream_id == *stream_id).unwrap().expected_rate_mbps;
        println!(
            "{:>6}  {:>6}  {:>9}  {:>14}  {:>9}  {:>8}  {:>12}",
            stream_id,
            format_real(demand),
            format_real(stats.mean_delivered_mbps),
            format_real(stats.p95_latency_ms),
            format_real(stats.mean_loss),
            format_real(stats.mean_qos),
            format_real(stats.mean_utility),
        );
    }
    let agg = &result.summary.aggregate;
    println!();
    println!(
        "aggregate: mean {} Mbps, cumulative {} Mbit, mean utility {}",
        format_real(agg.mean_delivered_mbps),
        format_real(agg.cumulative_delivered_mbit),
        format_real(agg.mean_utility),
    );
    println!("hard constraint violations: {}", result.violations.hard_total());
}
