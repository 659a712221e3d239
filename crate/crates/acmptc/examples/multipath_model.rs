//! The analytical multi-path model: sub-flow throughput, equilibrium
//! windows, and proportional load allocation.
//!
//! ```bash
//! cargo run --example multipath_model
//! ```

use acmptc::export::format_real;
use acmptc::mptcp::{
    allocate_load, equilibrium_window, subflow_throughput, total_throughput, SubflowParams,
};

fn main() {
    let subflows = vec![
        SubflowParams::new(10.0, 0.1, 0.02).unwrap(),
        SubflowParams::new(20.0, 0.2, 0.1).unwrap(),
        SubflowParams::new(5.0, 0.05, 0.0).unwrap(),
    ];

    println!("subflow  window_mbit  rtt_s  loss   modeled_mbps");
    for (i, s) in subflows.iter().enumerate() {
        println!(
            "{:>7}  {:>11}  {:>5}  {:>5}  {:>12}",
            i,
            format_real(s.window_mbit),
            format_real(s.rtt_s),
            format_real(s.loss_prob),
            format_real(subflow_throughput(s)),
        );
    }
    println!("total modeled throughput: {} Mbps", format_real(total_throughput(&subflows)));

    println!();
    println!("equilibrium windows from loss probability:");
    for p in [0.5, 0.1, 0.02, 0.001] {
        println!(
            "  p = {:<6} exact {:>8}  approx {:>8}",
            p,
            format_real(equilibrium_window(p, true).unwrap()),
            format_real(equilibrium_window(p, false).unwrap()),
        );
    }

    let alloc = allocate_load(100.0, &subflows).unwrap();
    println!();
    println!(
        "100 Mbit split proportionally to modeled throughput: [{}] (sum {})",
        alloc.shares.iter().map(|s| format_real(*s)).collect::<Vec<_>>().join(", "),
        format_real(alloc.shares.iter().sum::<f64>()),
    );
}
