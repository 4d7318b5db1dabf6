//! Linear attention (normalized form), the dense masked reference, and
//! softmax attention.
//!
//! The normalized kernels keep the RowNormalize semantics for oracle tests;
//! the model path uses the unnormalized QLA kernels in [`super::qla`].

use super::KernelError;
use crate::numerics::matrix::{dot, Matrix};
use rayon::prelude::*;

const NORMALIZER_FLOOR: f64 = 1e-12;

/// Row-wise dot products of two equal-shape matrices: `out[i] = x_i . y_i`.
///
/// This is the diagonal of X Yᵀ without forming it.
pub fn delta_diag(x: &Matrix, y: &Matrix) -> Result<Vec<f64>, KernelError> {
    if !x.same_shape(y) {
        return Err(KernelError::ShapeMismatch {
            context: "delta_diag",
            expected: x.shape_str(),
            found: y.shape_str(),
        });
    }
    crate::numerics::flops::add(2 * (x.rows() * x.cols()) as u64);
    Ok((0..x.rows()).map(|i| dot(x.row(i), y.row(i))).collect())
}

/// RowNormalize(QKᵀ)V computed as Q(KᵀV) / (Q ColSum(K)ᵀ) in O(L d²),
/// never materializing QKᵀ.
pub fn lin_attn_self(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix, KernelError> {
    check_shapes("lin_attn_self", &[(q, k), (k, v)])?;
    normalized_linear(q, k, v)
}

/// Target rows attending the source K, V with the same normalized form.
pub fn lin_attn_target(t: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix, KernelError> {
    if t.cols() != k.cols() {
        return Err(KernelError::ShapeMismatch {
            context: "lin_attn_target",
            expected: format!("queries with {} cols", k.cols()),
            found: t.shape_str(),
        });
    }
    check_shapes("lin_attn_target", &[(k, v)])?;
    normalized_linear(t, k, v)
}

fn normalized_linear(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix, KernelError> {
    let colsum = k.col_sums();
    let mut inv_denom = Vec::with_capacity(q.rows());
    for i in 0..q.rows() {
        let denom = dot(q.row(i), &colsum);
        if denom.abs() < NORMALIZER_FLOOR {
            return Err(KernelError::DegenerateNormalizer { row: i, value: denom });
        }
        inv_denom.push(1.0 / denom);
    }
    let z = k.matmul_ta(v);
    Ok(q.matmul(&z).scale_rows(&inv_denom))
}

/// Per-target self attention Diag(TTᵀ)T: row i is ‖t_i‖² t_i.
pub fn diag_self_attn(t: &Matrix) -> Matrix {
    let w = delta_diag(t, t).expect("same matrix twice");
    t.scale_rows(&w)
}

/// Dense O((n+m)²) reference for the mixed masked form
/// O = (QKᵀ ⊙ M)V / norm with sources attending all sources and targets
/// attending all sources plus themselves.
///
/// This is the masked-semantics oracle for the linear kernels; it is the one
/// kernel allowed to do quadratic work.
pub fn mixed_masked_attn(split: &super::SourceTargetSplit, norm: f64) -> Matrix {
    assert!(norm > 0.0, "norm must be positive");
    let (n, m, d) = (split.source_len(), split.target_len(), split.dim());
    let q = Matrix::concat_rows(&[&split.qs, &split.qt]);
    let k = Matrix::concat_rows(&[&split.ks, &split.kt]);
    let v = Matrix::concat_rows(&[&split.vs, &split.vt]);
    let mut out = Matrix::zeros(n + m, d);
    let inv = 1.0 / norm;
    for i in 0..n + m {
        let q_row = q.row(i);
        // Sources see columns [0, n); target i additionally sees itself.
        let mut acc = vec![0.0; d];
        for j in 0..n {
            let s = dot(q_row, k.row(j)) * inv;
            for (a, &vv) in acc.iter_mut().zip(v.row(j)) {
                *a += s * vv;
            }
        }
        if i >= n {
            let s = dot(q_row, k.row(i)) * inv;
            for (a, &vv) in acc.iter_mut().zip(v.row(i)) {
                *a += s * vv;
            }
        }
        out.row_mut(i).copy_from_slice(&acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoolMask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl BoolMask {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), rows * cols, "mask data length");
        Self { rows, cols, data }
    }

    #[inline]
    fn allowed(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttnMask {
    Full,
    /// Query i attends keys j <= i + (b - a); for a == b this is the usual
    /// triangular mask (queries are the last `a` positions of the keys).
    Causal,
    Explicit(BoolMask),
}

/// RowSoftmax(QKᵀ)V. No temperature scaling is applied here; callers that
/// want 1/sqrt(d) scale Q beforehand.
///
/// Row-parallel and bitwise deterministic: every output row is a serial
/// computation over its own scratch.
pub fn softmax_attn(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    mask: &AttnMask,
) -> Result<Matrix, KernelError> {
    if q.cols() != k.cols() {
        return Err(KernelError::ShapeMismatch {
            context: "softmax_attn",
            expected: format!("queries with {} cols", k.cols()),
            found: q.shape_str(),
        });
    }
    check_shapes("softmax_attn", &[(k, v)])?;
    let (a, b, d) = (q.rows(), k.rows(), q.cols());
    if let AttnMask::Explicit(m) = mask {
        if m.rows != a || m.cols != b {
            return Err(KernelError::ShapeMismatch {
                context: "softmax_attn mask",
                expected: format!("{a}x{b}"),
                found: format!("{}x{}", m.rows, m.cols),
            });
        }
    }
    // Pre-validate rows so the parallel loop below is infallible.
    for i in 0..a {
        if row_bound(mask, i, a, b).is_none() {
            return Err(KernelError::FullyMaskedRow { row: i });
        }
    }
    crate::numerics::flops::add(4 * (a * b * d) as u64);

    let mut out = vec![0.0; a * d];
    let body = |i: usize, out_row: &mut [f64], scores: &mut Vec<f64>| {
        let q_row = q.row(i);
        scores.clear();
        // `row_bound` already rejected empty rows.
        match mask {
            AttnMask::Full | AttnMask::Causal => {
                let hi = row_bound(mask, i, a, b).unwrap();
                for j in 0..hi {
                    scores.push(dot(q_row, k.row(j)));
                }
                weighted_rows(out_row, scores, v, |j| j);
            }
            AttnMask::Explicit(m) => {
                let idx: Vec<usize> = (0..b).filter(|&j| m.allowed(i, j)).collect();
                for &j in &idx {
                    scores.push(dot(q_row, k.row(j)));
                }
                weighted_rows(out_row, scores, v, |p| idx[p]);
            }
        }
    };
    if a * b * d >= (1 << 21) && a > 1 {
        out.par_chunks_mut(d)
            .enumerate()
            .for_each_init(Vec::new, |scratch, (i, row)| body(i, row, scratch));
    } else {
        let mut scratch = Vec::new();
        for (i, row) in out.chunks_mut(d).enumerate() {
            body(i, row, &mut scratch);
        }
    }
    Ok(Matrix::from_raw(a, d, out))
}

/// Exclusive upper bound of attended keys for Full/Causal masks; None when
/// the row is fully masked. Explicit masks return the count of allowed keys.
fn row_bound(mask: &AttnMask, i: usize, a: usize, b: usize) -> Option<usize> {
    match mask {
        AttnMask::Full => (b > 0).then_some(b),
        AttnMask::Causal => {
            let hi = (i + b + 1).checked_sub(a)?.min(b);
            (hi > 0).then_some(hi)
        }
        AttnMask::Explicit(m) => {
            let cnt = (0..b).filter(|&j| m.allowed(i, j)).count();
            (cnt > 0).then_some(cnt)
        }
    }
}

/// Softmax over `scores` in place, then accumulate the weighted value rows.
fn weighted_rows(out_row: &mut [f64], scores: &mut [f64], v: &Matrix, key_of: impl Fn(usize) -> usize) {
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    let inv = 1.0 / sum;
    out_row.fill(0.0);
    for (p, &e) in scores.iter().enumerate() {
        let w = e * inv;
        for (o, &vv) in out_row.iter_mut().zip(v.row(key_of(p))) {
            *o += w * vv;
        }
    }
}

fn check_shapes(context: &'static str, pairs: &[(&Matrix, &Matrix)]) -> Result<(), KernelError> {
    for (a, b) in pairs {
        if !a.same_shape(b) {
            return Err(KernelError::ShapeMismatch {
                context,
                expected: a.shape_str(),
                found: b.shape_str(),
            });
        }
    }
    Ok(())
}
