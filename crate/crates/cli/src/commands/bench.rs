//! `vista bench`: kernel scaling CSV plus cached-vs-full inference latency.

use crate::CliError;
use std::fmt::Write as _;
use std::path::Path;
use vista_core::bench::{bench_inference, bench_kernels, slope_of};

pub fn run(grid: &[usize], reps: usize, dim: usize, dtype: &str, out: Option<&Path>) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Config("bench grid must not be empty".into()));
    }
    if reps == 0 {
        return Err(CliError::Config("bench reps must be >= 1".into()));
    }
    let include_f32 = dtype == "f32";
    let rows = bench_kernels(grid, reps, dim, include_f32);
    let infer_rows = bench_inference(grid, reps, 20);

    let mut csv = String::from("kernel,n,median_ms,peak_alloc_bytes\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{}", r.kernel, r.n, r.median_ms, r.peak_alloc_bytes).unwrap();
    }
    for r in &infer_rows {
        writeln!(csv, "infer_cached,{},{},0", r.n, r.cached_ms).unwrap();
        writeln!(csv, "infer_full,{},{},0", r.n, r.full_ms).unwrap();
    }
    print!("{csv}");
    if let Some(p) = out {
        std::fs::write(p, csv.as_bytes())?;
    }

    eprintln!("qla log-log slope:     {:+.3}", slope_of(&rows, "qla"));
    eprintln!("softmax log-log slope: {:+.3}", slope_of(&rows, "softmax"));
    if let (Some(first), Some(last)) = (infer_rows.first(), infer_rows.last()) {
        eprintln!(
            "cached latency {:.3} -> {:.3} ms; full pipeline {:.3} -> {:.3} ms",
            first.cached_ms, last.cached_ms, first.full_ms, last.full_ms
        );
    }
    Ok(())
}
