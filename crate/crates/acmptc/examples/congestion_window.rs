//! Congestion-window trajectory under changing loss, plus the
//! rate-tracking correction.
//!
//! ```bash
//! cargo run --example congestion_window
//! ```

use acmptc::control::{adjust_cwnd_rate, update_cwnd, ControlParams};
use acmptc::export::format_real;

fn main() {
    let params = ControlParams::default();
    println!(
        "loss threshold {}: grow below it, multiplicative decrease at or above it, floor at 1 Mbit",
        params.loss_threshold
    );

    let mut cwnd: f64 = 5.0;
    println!();
    println!("step  loss   cwnd_after_loss_law  cwnd_after_rate_law");
    for step in 0..20 {
        // clean network for ten steps, then a lossy burst
        let loss = if step < 10 { 0.005 } else { 0.08 };
        cwnd = update_cwnd(cwnd, loss, 0.0, &params);
        let after_loss_law = cwnd;
        // stream delivers 18 of its expected 20 Mbps
        cwnd = adjust_cwnd_rate(cwnd, 18.0, 20.0, &params).unwrap();
        println!(
            "{:>4}  {:>5}  {:>19}  {:>19}",
            step,
            format_real(loss),
            format_real(after_loss_law),
            format_real(cwnd),
        );
    }

    println!();
    println!("the floor holds under any loss sequence:");
    let mut w = 2.0;
    for _ in 0..10 {
        w = update_cwnd(w, 1.0, 1.0, &params);
    }
    println!("after 10 steps of total loss: cwnd = {}", format_real(w));
}
