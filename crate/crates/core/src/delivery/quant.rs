//! Symmetric-range affine int8 quantization, one (scale, zero_point) pair
//! per token row. Worst-case distortion per entry is scale/2, i.e. bounded
//! by the row's value range over 508.

use crate::numerics::Matrix;

/// Floor for the per-row scale so constant rows quantize cleanly.
pub const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedSummary {
    pub user_id: u64,
    pub version: u64,
    pub k: u32,
    pub d: u32,
    /// Per-row scale, always >= SCALE_FLOOR.
    pub scales: Vec<f64>,
    /// Per-row midpoint of the value range.
    pub zero_points: Vec<f64>,
    /// Row-major k*d codes in [-127, 127].
    pub codes: Vec<i8>,
}

pub fn quantize(user_id: u64, version: u64, tokens: &Matrix) -> QuantizedSummary {
    let (k, d) = (tokens.rows(), tokens.cols());
    let mut scales = Vec::with_capacity(k);
    let mut zero_points = Vec::with_capacity(k);
    let mut codes = Vec::with_capacity(k * d);
    for i in 0..k {
        let row = tokens.row(i);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if d == 0 {
            lo = 0.0;
            hi = 0.0;
        }
        let scale = ((hi - lo) / 254.0).max(SCALE_FLOOR);
        let zp = (hi + lo) / 2.0;
        scales.push(scale);
        zero_points.push(zp);
        for &v in row {
            let c = ((v - zp) / scale).round().clamp(-127.0, 127.0);
            codes.push(c as i8);
        }
    }
    QuantizedSummary {
        user_id,
        version,
        k: k as u32,
        d: d as u32,
        scales,
        zero_points,
        codes,
    }
}

pub fn dequantize(q: &QuantizedSummary) -> Matrix {
    let (k, d) = (q.k as usize, q.d as usize);
    let mut data = Vec::with_capacity(k * d);
    for i in 0..k {
        let scale = q.scales[i];
        let zp = q.zero_points[i];
        for j in 0..d {
            data.push(f64::from(q.codes[i * d + j]) * scale + zp);
        }
    }
    Matrix::from_raw(k, d, data)
}
