//! Flat-slice attention kernels generic over f32/f64, used only by the
//! benchmark path. The learning path stays in f64 `Matrix` kernels; these
//! exist so the scaling measurements can also be taken at single precision.

use rayon::prelude::*;

pub trait Scalar:
    Copy
    + Send
    + Sync
    + PartialOrd
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn exp(self) -> Self;
    fn neg_infinity() -> Self;
    fn maxv(self, other: Self) -> Self;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn neg_infinity() -> Self {
        f32::NEG_INFINITY
    }
    fn maxv(self, other: Self) -> Self {
        self.max(other)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn neg_infinity() -> Self {
        f64::NEG_INFINITY
    }
    fn maxv(self, other: Self) -> Self {
        self.max(other)
    }
}

#[inline]
fn silu<T: Scalar>(x: T) -> T {
    x / (T::ONE + (T::ZERO - x).exp())
}

#[inline]
fn dot_flat<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        s = s + x * y;
    }
    s
}

/// Source-only QLA with SiLU on Q and K: out = silu(Q) (silu(K)ᵀ V), row-major
/// n×d slices. O(n d²) work, O(d²) extra memory.
pub fn qla_forward_flat<T: Scalar>(n: usize, d: usize, q: &[T], k: &[T], v: &[T], out: &mut [T]) {
    assert_eq!(q.len(), n * d);
    assert_eq!(k.len(), n * d);
    assert_eq!(v.len(), n * d);
    assert_eq!(out.len(), n * d);
    let mut z = vec![T::ZERO; d * d];
    for i in 0..n {
        let k_row = &k[i * d..(i + 1) * d];
        let v_row = &v[i * d..(i + 1) * d];
        for (l, &kv) in k_row.iter().enumerate() {
            let a = silu(kv);
            let z_row = &mut z[l * d..(l + 1) * d];
            for (zz, &vv) in z_row.iter_mut().zip(v_row) {
                *zz = *zz + a * vv;
            }
        }
    }
    out.par_chunks_mut(d).enumerate().for_each(|(i, out_row)| {
        let q_row = &q[i * d..(i + 1) * d];
        for o in out_row.iter_mut() {
            *o = T::ZERO;
        }
        for (l, &qv) in q_row.iter().enumerate() {
            let a = silu(qv);
            let z_row = &z[l * d..(l + 1) * d];
            for (o, &zz) in out_row.iter_mut().zip(z_row) {
                *o = *o + a * zz;
            }
        }
    });
}

/// Full softmax attention RowSoftmax(QKᵀ)V on row-major slices; O(a b d).
pub fn softmax_attn_flat<T: Scalar>(
    a: usize,
    b: usize,
    d: usize,
    q: &[T],
    k: &[T],
    v: &[T],
    out: &mut [T],
) {
    assert_eq!(q.len(), a * d);
    assert_eq!(k.len(), b * d);
    assert_eq!(v.len(), b * d);
    assert_eq!(out.len(), a * d);
    out.par_chunks_mut(d)
        .enumerate()
        .for_each_init(
            || vec![T::ZERO; b],
            |scores, (i, out_row)| {
                let q_row = &q[i * d..(i + 1) * d];
                let mut max = T::neg_infinity();
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot_flat(q_row, &k[j * d..(j + 1) * d]);
                    max = max.maxv(*s);
                }
                let mut sum = T::ZERO;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    sum = sum + *s;
                }
                let inv = T::ONE / sum;
                for o in out_row.iter_mut() {
                    *o = T::ZERO;
                }
                for (j, &e) in scores.iter().enumerate() {
                    let w = e * inv;
                    let v_row = &v[j * d..(j + 1) * d];
                    for (o, &vv) in out_row.iter_mut().zip(v_row) {
                        *o = *o + w * vv;
                    }
                }
            },
        );
}
