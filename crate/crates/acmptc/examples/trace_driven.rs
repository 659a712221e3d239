//! Replay a network trace instead of the random walk, then export metrics.
//!
//! Writes a small trace with a mid-run bandwidth dip on path 0, runs an
//! episode against it, and drops metrics.csv + summary.toml into a temp
//! directory.
//!
//! ```bash
//! cargo run --example trace_driven
//! ```

use std::fmt::Write as _;

use acmptc::control::StreamSpec;
use acmptc::export::{self, format_real};
use acmptc::sim::{run_episode, ScenarioConfig, SchedulerKind};

fn main() {
    let dir = std::env::temp_dir().join("acmptc_trace_example");
    std::fs::create_dir_all(&dir).expect("writable temp dir");

    let mut trace = String::from("t,path_id,bandwidth_mbps,latency_ms,loss_rate\n");
    for t in 0..=40u64 {
        // path 0 dips hard between t=15 and t=25
        let bandwidth = if (15..=25).contains(&t) { 12.0 } else { 80.0 };
        let _ = writeln!(trace, "{t},0,{bandwidth},20,0.005");
        let _ = writeln!(trace, "{t},1,50,35,0.01");
    }
    let trace_path = dir.join("trace.csv");
    std::fs::write(&trace_path, trace).expect("write trace");

    let mut cfg = ScenarioConfig { horizon: 40, ..Default::default() };
    cfg.dynamics.n_paths = 2;
    cfg.dynamics.background_traffic_range = [0.0, 5.0];
    cfg.scheduler = SchedulerKind::Acmptc;
    cfg.streams =
        vec![StreamSpec { stream_id: 0, expected_rate_mbps: 45.0, weight_gamma: 1.0, max_paths: 2 }];
    cfg.trace_path = Some(trace_path);

    let result = run_episode(&cfg, 1).expect("valid trace scenario");
    println!("t   delivered_mbps  loss   assigned_paths");
    for r in &result.records {
        println!(
            "{:<3} {:>14}  {:>5}  {:?}",
            r.t,
            format_real(r.delivered_mbps),
            format_real(r.loss_rate),
            r.assigned_paths
        );
    }

    export::export_episode(&result, &dir).expect("export");
    println!();
    println!("metrics and summary written under {}", dir.display());
}
