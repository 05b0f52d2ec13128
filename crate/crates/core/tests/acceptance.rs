//! Runs every acceptance criterion at full size and prints one line each.

use std::time::Instant;

use permgibbs_core::verify::{run_criterion, VerifyOptions, CRITERIA};

#[test]
fn acceptance() {
    let opts = VerifyOptions::default();
    let mut failed = Vec::new();
    for &(id, _) in CRITERIA.iter() {
        let start = Instant::now();
        let r = run_criterion(id, &opts).unwrap();
        println!("{r} [{:.1}s]", start.elapsed().as_secs_f64());
        if !r.passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn injected_fault_fails_the_oracle_criterion() {
    let opts = VerifyOptions {
        oracle_samples: 20_000,
        inject_fault: true,
        ..VerifyOptions::default()
    };
    let r = run_criterion(2, &opts).unwrap();
    println!("{r}");
    assert!(!r.passed);
}
