//! Wall-clock scaling measurements: quasi-linear vs softmax attention
//! across sequence lengths, and cached-inference vs full-pipeline latency.
//!
//! Every measurement is the median of warm repetitions. Peak allocation is
//! read from the counting allocator when the host binary installs one
//! (otherwise the column reads zero).

use crate::alloc_stats;
use crate::attention::{self, fast, AttnMask, SourceTargetSplit};
use crate::delivery::{self, SummaryCache};
use crate::model::{ModelConfig, VistaModel};
use crate::numerics::{ActivationKind, Matrix};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub kernel: String,
    pub n: usize,
    pub median_ms: f64,
    pub peak_alloc_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceRow {
    pub n: usize,
    pub cached_ms: f64,
    pub full_ms: f64,
}

fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_raw(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
}

/// Times `f` with one warmup call, returning (median ms over reps, peak
/// alloc bytes observed across the timed calls).
fn time_median<T>(reps: usize, mut f: impl FnMut() -> T) -> (f64, u64) {
    std::hint::black_box(f());
    let baseline = alloc_stats::reset_peak();
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(f());
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let peak = alloc_stats::peak_bytes().saturating_sub(baseline);
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (times[times.len() / 2], peak)
}

/// QLA forward, blockwise QLA and softmax attention over an N-grid at
/// embedding width d. With `include_f32`, single-precision flat variants of
/// the two kernels are measured as well.
pub fn bench_kernels(grid: &[usize], reps: usize, d: usize, include_f32: bool) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    let mut rng = StdRng::seed_from_u64(99);
    for &n in grid {
        let q = random_matrix(&mut rng, n, d, 0.5);
        let k = random_matrix(&mut rng, n, d, 0.5);
        let v = random_matrix(&mut rng, n, d, 0.5);
        let split = SourceTargetSplit::sources_only(q.clone(), k.clone(), v.clone()).unwrap();

        let (ms, peak) = time_median(reps, || {
            attention::qla_forward(&split, ActivationKind::Silu, ActivationKind::Identity)
        });
        rows.push(BenchRow { kernel: "qla".into(), n, median_ms: ms, peak_alloc_bytes: peak });

        let (ms, peak) = time_median(reps, || {
            attention::qla_forward_blockwise(&split, ActivationKind::Silu, ActivationKind::Identity, 256)
        });
        rows.push(BenchRow { kernel: "qla_blockwise".into(), n, median_ms: ms, peak_alloc_bytes: peak });

        let (ms, peak) = time_median(reps, || attention::softmax_attn(&q, &k, &v, &AttnMask::Full).unwrap());
        rows.push(BenchRow { kernel: "softmax".into(), n, median_ms: ms, peak_alloc_bytes: peak });

        if include_f32 {
            let qf: Vec<f32> = q.data().iter().map(|&x| x as f32).collect();
            let kf: Vec<f32> = k.data().iter().map(|&x| x as f32).collect();
            let vf: Vec<f32> = v.data().iter().map(|&x| x as f32).collect();
            let mut out = vec![0.0f32; n * d];
            let (ms, peak) = time_median(reps, || fast::qla_forward_flat(n, d, &qf, &kf, &vf, &mut out));
            rows.push(BenchRow { kernel: "qla_f32".into(), n, median_ms: ms, peak_alloc_bytes: peak });
            let (ms, peak) =
                time_median(reps, || fast::softmax_attn_flat(n, n, d, &qf, &kf, &vf, &mut out));
            rows.push(BenchRow { kernel: "softmax_f32".into(), n, median_ms: ms, peak_alloc_bytes: peak });
        }
    }
    rows
}

/// Least-squares slope of log(time) against log(n).
pub fn loglog_slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = (x as f64).ln();
        let ly = y.max(1e-9).ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn slope_of(rows: &[BenchRow], kernel: &str) -> f64 {
    let pts: Vec<(usize, f64)> =
        rows.iter().filter(|r| r.kernel == kernel).map(|r| (r.n, r.median_ms)).collect();
    loglog_slope(&pts)
}

/// Cached-inference vs full-pipeline latency across history lengths,
/// reported per request (single user, 8 candidates).
///
/// The cached path fetches quantized tokens, dequantizes, and runs target
/// attention plus the head; the full path re-summarizes the history first.
/// The cached path is microseconds, so many requests amortize one timed
/// call; the full path is milliseconds-to-seconds, so `full_requests`
/// stays small.
pub fn bench_inference(grid: &[usize], reps: usize, requests: usize) -> Vec<InferenceRow> {
    let cfg = ModelConfig {
        seed_count: 32,
        dim: 64,
        summarize_layers: 1,
        target_layers: 1,
        decoder_layers: 0,
        head_hidden: vec![64],
        ..ModelConfig::tiny()
    };
    let model = VistaModel::new(cfg);
    let mut rng = StdRng::seed_from_u64(1234);
    let m_cand = 8usize;
    let full_requests = 2usize;
    let mut rows = Vec::new();
    for &n in grid {
        let uih = random_matrix(&mut rng, n, 64, 0.5);
        let cands = random_matrix(&mut rng, m_cand, 64, 0.5);
        let tokens = model.summarize_tokens(&uih).unwrap();
        let cache = SummaryCache::new(2);
        cache.apply(Arc::new(delivery::quantize(1, 1, &tokens)));

        let (cached_ms, _) = time_median(reps, || {
            for _ in 0..requests {
                let f = delivery::fetch_for_inference(&cache, 1, 1, 0, false).unwrap();
                let t = model.target_attend(&f.tokens, &cands);
                std::hint::black_box(model.predict(&t));
            }
        });
        let (full_ms, _) = time_median(reps, || {
            for _ in 0..full_requests {
                let fresh = model.summarize_tokens(&uih).unwrap();
                let t = model.target_attend(&fresh, &cands);
                std::hint::black_box(model.predict(&t));
            }
        });
        rows.push(InferenceRow {
            n,
            cached_ms: cached_ms / requests as f64,
            full_ms: full_ms / full_requests as f64,
        });
    }
    rows
}
