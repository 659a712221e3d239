//! Path scoring, subset selection, and the threshold reallocation rules.
//!
//! ```bash
//! cargo run --example path_selection
//! ```

use acmptc::control::{
    reallocate_on_congestion, reallocate_on_delay, reallocate_on_loss, score_path, select_paths,
    ControlParams, StreamSpec,
};
use acmptc::export::format_real;
use acmptc::net::{NetworkState, PathState};

fn path(id: usize, bandwidth: f64, latency: f64, loss: f64, congestion: f64) -> PathState {
    PathState {
        path_id: id,
        bandwidth_mbps: bandwidth,
        latency_ms: latency,
        rtt_ms: 2.0 * latency * (1.0 + congestion),
        loss_rate: loss,
        congestion,
        capacity_mbps: 100.0,
    }
}

fn main() {
    let net = NetworkState {
        t: 0,
        paths: vec![
            path(0, 85.0, 15.0, 0.002, 0.2),
            path(1, 40.0, 60.0, 0.010, 0.9),
            path(2, 95.0, 90.0, 0.001, 0.3),
            path(3, 30.0, 20.0, 0.045, 0.1),
            path(4, 60.0, 35.0, 0.020, 0.5),
        ],
    };
    let params = ControlParams::default();

    println!("path  bandwidth  latency  loss   congestion  score");
    for p in &net.paths {
        println!(
            "{:>4}  {:>9}  {:>7}  {:>5}  {:>10}  {:>6}",
            p.path_id,
            format_real(p.bandwidth_mbps),
            format_real(p.latency_ms),
            format_real(p.loss_rate),
            format_real(p.congestion),
            format_real(score_path(p, &params)),
        );
    }

    for max_paths in [1, 2, 3] {
        let stream = StreamSpec { stream_id: 0, expected_rate_mbps: 25.0, weight_gamma: 1.0, max_paths };
        let selected = select_paths(&stream, &net, &params);
        println!("best set with at most {max_paths} path(s): {selected:?}");
    }

    println!();
    println!("reallocation checks from each path (thresholds: C>{}, RTT>{}ms or L>{}ms, loss>{}):",
        params.congestion_threshold, params.rtt_threshold_ms, params.latency_threshold_ms, params.loss_threshold);
    for current in 0..net.n_paths() {
        let congestion = reallocate_on_congestion(current, &net, &params);
        let delay = reallocate_on_delay(current, &net, &params);
        let loss = reallocate_on_loss(current, &net, &params);
        println!(
            "from path {current}: congestion -> {}, delay -> {}, loss -> {}",
            congestion.target, delay.target, loss.target
        );
    }
}
