//! `vista gradcheck`: finite-difference sweeps over the kernel gradients
//! and the whole tiny model; nonzero exit on any failure.

use crate::CliError;
use vista_core::gradcheck::{descent_probe, kernel_suite, model_suite, CheckResult};

pub fn run(suite: &str, corrupt: Option<&str>, seeds: u64) -> Result<(), CliError> {
    if seeds == 0 {
        return Err(CliError::Config("gradcheck needs at least one seed".into()));
    }
    let mut results: Vec<CheckResult> = Vec::new();
    if suite == "kernel" || suite == "all" {
        results.extend(kernel_suite(corrupt, seeds));
    }
    if suite == "model" || suite == "all" {
        results.extend(model_suite(5));
        results.push(descent_probe());
    }
    let mut failures = 0usize;
    for r in &results {
        println!(
            "{} {:<44} worst_rel={:.3e} tol={:.0e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.worst_rel,
            r.tolerance
        );
        if !r.pass {
            failures += 1;
        }
    }
    println!("{} checks, {} failures", results.len(), failures);
    if failures > 0 {
        let names: Vec<&str> =
            results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
        return Err(CliError::Numeric(format!("gradient checks failed: {}", names.join(", "))));
    }
    Ok(())
}
