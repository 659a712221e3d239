//! Bandwidth allocation and demand-proportional path sharing.
//!
//! ```bash
//! cargo run --example bandwidth_sharing
//! ```

use acmptc::control::{allocate_bandwidth, reallocate_bandwidth, share_path};
use acmptc::export::format_real;
use acmptc::net::{NetworkState, PathState};

fn main() {
    // one stream's window-rate allocation against a partially used path
    println!("window 1 Mbit, RTT 100 ms, capacity 100 Mbps:");
    for usage in [0.0, 50.0, 95.0, 100.0] {
        let granted = allocate_bandwidth(1.0, 0.1, 100.0, usage).unwrap();
        println!("  others using {:>5} Mbps -> allocation {} Mbps", format_real(usage), format_real(granted));
    }

    // several streams sharing one path's headroom
    println!();
    for (demands, headroom) in [
        (vec![10.0], 100.0),
        (vec![30.0, 10.0], 20.0),
        (vec![25.0, 25.0, 25.0], 60.0),
        (vec![5.0, 100.0], 110.0),
    ] {
        let shares = share_path(&demands, headroom);
        println!(
            "demands {:?} over headroom {} -> shares [{}] (sum {})",
            demands,
            format_real(headroom),
            shares.iter().map(|s| format_real(*s)).collect::<Vec<_>>().join(", "),
            format_real(shares.iter().sum::<f64>()),
        );
    }

    // where an unsatisfied stream should expand next: the path with the
    // largest spare capacity
    let path = |id: usize, capacity: f64| PathState {
        path_id: id,
        bandwidth_mbps: capacity,
        latency_ms: 20.0,
        rtt_ms: 40.0,
        loss_rate: 0.0,
        congestion: 0.0,
        capacity_mbps: capacity,
    };
    let net = NetworkState { t: 0, paths: vec![path(0, 100.0), path(1, 100.0), path(2, 100.0)] };
    let usage = [95.0, 60.0, 88.0];
    let target = reallocate_bandwidth(&net, &usage);
    println!();
    println!(
        "usage {usage:?} on 100 Mbps paths -> expand onto path {} (saturated: {})",
        target.target, target.saturated
    );
}
