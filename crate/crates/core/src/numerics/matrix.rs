//! Dense row-major f64 matrices.
//!
//! This is the universal carrier for Q/K/V blocks, embeddings and gradients.
//! Everything here is allocation-honest: the attention kernels are audited
//! for never materializing a sequence-by-sequence buffer, so the primitives
//! below only ever allocate their stated output shapes.
//!
//! Inner loops are written over exact chunks so LLVM can vectorize them;
//! large matmuls split by output row across rayon workers, which keeps
//! results bitwise identical to the serial path (each output row is an
//! independent serial computation).

use super::{flops, NumericsError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Work threshold (in multiply-adds) below which matmuls stay serial.
const PAR_FLOP_THRESHOLD: usize = 1 << 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting NaN/Inf and length
    /// mismatches.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::BadLength { len: data.len(), rows, cols });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumericsError::NonFinite { row: i / cols.max(1), col: i % cols.max(1) });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NumericsError::DimensionMismatch {
                    expected: format!("row of length {c}"),
                    found: format!("row of length {}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    /// Crate-internal constructor for values produced by our own arithmetic.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`, serial or row-parallel depending on size.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dims {}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols);
        let (m, k, n) = (self.rows, self.cols, other.cols);
        flops::add(2 * (m * k * n) as u64);
        let mut out = vec![0.0; m * n];
        let body = |i: usize, out_row: &mut [f64]| {
            let a_row = self.row(i);
            for (l, &a_val) in a_row.iter().enumerate() {
                let b_row = &other.data[l * n..(l + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_val * b;
                }
            }
        };
        if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| body(i, row));
        } else {
            for (i, row) in out.chunks_mut(n).enumerate() {
                body(i, row);
            }
        }
        Self::from_raw(m, n, out)
    }

    /// `self * otherᵀ` without materializing the transpose.
    pub fn matmul_tb(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_tb inner dims");
        let (m, k, n) = (self.rows, self.cols, other.rows);
        flops::add(2 * (m * k * n) as u64);
        let mut out = vec![0.0; m * n];
        let body = |i: usize, out_row: &mut [f64]| {
            let a_row = self.row(i);
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = dot(a_row, other.row(j));
            }
        };
        if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| body(i, row));
        } else {
            for (i, row) in out.chunks_mut(n).enumerate() {
                body(i, row);
            }
        }
        Self::from_raw(m, n, out)
    }

    /// `selfᵀ * other` accumulated as rank-1 updates in ascending row order.
    pub fn matmul_ta(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "matmul_ta inner dims");
        let (k, m, n) = (self.rows, self.cols, other.cols);
        flops::add(2 * (m * k * n) as u64);
        let mut out = vec![0.0; m * n];
        for i in 0..k {
            let a_row = self.row(i);
            let b_row = other.row(i);
            for (l, &a_val) in a_row.iter().enumerate() {
                let out_row = &mut out[l * n..(l + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_val * b;
                }
            }
        }
        Self::from_raw(m, n, out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert!(self.same_shape(other), "add shape mismatch");
        flops::add(self.data.len() as u64);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert!(self.same_shape(other), "sub shape mismatch");
        flops::add(self.data.len() as u64);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other), "add_assign shape mismatch");
        flops::add(self.data.len() as u64);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Self, scale: f64) {
        assert!(self.same_shape(other), "add_assign_scaled shape mismatch");
        flops::add(2 * self.data.len() as u64);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        flops::add(self.data.len() as u64);
        let data = self.data.iter().map(|a| a * s).collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        assert!(self.same_shape(other), "hadamard shape mismatch");
        flops::add(self.data.len() as u64);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    /// Multiplies row `i` by `weights[i]`.
    pub fn scale_rows(&self, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), self.rows, "scale_rows weight length");
        flops::add(self.data.len() as u64);
        let mut out = self.clone();
        for (i, &w) in weights.iter().enumerate() {
            for v in out.row_mut(i) {
                *v *= w;
            }
        }
        out
    }

    /// Column sums as a length-`cols` vector.
    pub fn col_sums(&self) -> Vec<f64> {
        flops::add(self.data.len() as u64);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    /// Stacks matrices vertically. All inputs must share a column count;
    /// zero-row inputs are permitted.
    pub fn concat_rows(parts: &[&Self]) -> Self {
        let cols = parts.iter().find(|p| p.rows > 0).map_or_else(
            || parts.first().map_or(0, |p| p.cols),
            |p| p.cols,
        );
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            assert!(p.rows == 0 || p.cols == cols, "concat_rows column mismatch");
            data.extend_from_slice(&p.data);
        }
        Self::from_raw(rows, cols, data)
    }

    /// Copies rows `[start, end)` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.rows, "slice_rows range");
        let data = self.data[start * self.cols..end * self.cols].to_vec();
        Self::from_raw(end - start, self.cols, data)
    }

    pub fn frob_dot(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "frob_dot shape mismatch");
        flops::add(2 * self.data.len() as u64);
        dot(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Dot product with eight-lane accumulation; fixed summation order, so the
/// result is reproducible across runs.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(matches!(
            Matrix::from_vec(2, 2, vec![1.0; 3]),
            Err(NumericsError::BadLength { .. })
        ));
    }

    #[test]
    fn matmul_matches_by_hand() {
        let a = Matrix::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Matrix::from_vec(3, 4, (0..12).map(|v| v as f64 * 0.37 - 1.5).collect()).unwrap();
        let b = Matrix::from_vec(3, 4, (0..12).map(|v| (v as f64).sin()).collect()).unwrap();
        let tb = a.matmul_tb(&b);
        let tb_ref = a.matmul(&b.transpose());
        assert!(tb.max_abs_diff(&tb_ref) < 1e-14);
        let ta = a.matmul_ta(&b);
        let ta_ref = a.transpose().matmul(&b);
        assert!(ta.max_abs_diff(&ta_ref) < 1e-14);
    }

    #[test]
    fn parallel_matmul_is_bitwise_serial() {
        // 256x128 * 128x128 crosses the parallel threshold.
        let a = Matrix::from_vec(256, 128, (0..256u64 * 128).map(|v| ((v * 2654435761) % 1000) as f64 / 999.0 - 0.5).collect()).unwrap();
        let b = Matrix::from_vec(128, 128, (0..128u64 * 128).map(|v| ((v * 40503) % 977) as f64 / 976.0 - 0.5).collect()).unwrap();
        let par = a.matmul(&b);
        // Force the serial path by computing row by row.
        let mut serial = Matrix::zeros(256, 128);
        for i in 0..256 {
            let row = a.slice_rows(i, i + 1).matmul(&b);
            serial.row_mut(i).copy_from_slice(row.row(0));
        }
        assert_eq!(par, serial);
    }

    #[test]
    fn flop_accounting_scales_with_shape() {
        let a = Matrix::zeros(8, 16);
        let b = Matrix::zeros(16, 4);
        flops::reset();
        let _ = a.matmul(&b);
        assert_eq!(flops::count(), 2 * 8 * 16 * 4);
    }

    proptest! {
        #[test]
        fn constructors_reject_non_finite(idx in 0usize..16, bad in prop_oneof![Just(f64::NAN), Just(f64::INFINITY), Just(f64::NEG_INFINITY)]) {
            let mut data = vec![0.5; 16];
            data[idx] = bad;
            prop_assert!(Matrix::from_vec(4, 4, data).is_err());
        }

        #[test]
        fn concat_then_slice_roundtrips(n in 0usize..6, m in 1usize..5) {
            let top = Matrix::filled(n, 3, 1.25);
            let bot = Matrix::filled(m, 3, -0.5);
            let cat = Matrix::concat_rows(&[&top, &bot]);
            prop_assert_eq!(cat.rows(), n + m);
            prop_assert_eq!(cat.slice_rows(0, n), top);
            prop_assert_eq!(cat.slice_rows(n, n + m), bot);
        }
    }
}
