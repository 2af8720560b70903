//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use std::time::Instant;

use capflow_cli::suites::{run_check, CHECKS};

fn main() {
    let start = Instant::now();
    let mut failed = 0;
    for c in &CHECKS {
        let r = run_check(c);
        println!("{} [{:.1} s]", r.line(), r.seconds);
        failed += usize::from(!r.passed);
    }
    println!("{} of {} criteria passed in {:.1} s", CHECKS.len() - failed, CHECKS.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
