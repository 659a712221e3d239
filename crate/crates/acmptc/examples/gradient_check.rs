//! Verify the hand-rolled backprop against central finite differences.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use acmptc::drl::gradcheck::run_suite;

fn main() {
    let report = run_suite(1000, 50, 0);
    println!("networks checked: {}", report.cases);
    println!("max relative error: {:e}", report.max_rel_error);
    println!("threshold:          {:e}", report.threshold);
    println!("{}", if report.passed() { "PASS" } else { "FAIL" });
    std::process::exit(if report.passed() { 0 } else { 1 });
}
