//! One summarization layer: Q/K/V projections, quasi-linear attention over
//! the full sequence, an SGLU gate, an output projection, and a residual.
//!
//! The attention output is divided by the sequence length (the 1/N factor
//! of the unnormalized mixed form) so activations stay bounded as histories
//! grow; a flag disables this for the algebraic unit tests.

use super::ModelError;
use crate::attention::{qla_backward_general, qla_forward, QlaSaved, SourceTargetSplit};
use crate::numerics::activation::{activation, activation_prime, sigmoid};
use crate::numerics::{ActivationKind, Matrix};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Sigmoid,
    /// Gate pinned to 1; used by tests and ablations.
    Open,
}

#[derive(Debug, Clone)]
pub struct LayerParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_g: Matrix,
    pub w_o: Matrix,
    pub phi1: ActivationKind,
    pub phi2: ActivationKind,
    pub gate: GateKind,
    pub norm_by_len: bool,
    /// Causal (prefix) attention instead of full; ablation only.
    pub causal: bool,
}

impl LayerParams {
    pub fn new(dim: usize, phi1: ActivationKind, phi2: ActivationKind, init_scale: f64, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let scale = init_scale / (dim as f64).sqrt();
        let mut mk = || {
            Matrix::from_raw(dim, dim, (0..dim * dim).map(|_| rng.gen_range(-scale..scale)).collect())
        };
        let w_q = mk();
        let w_k = mk();
        let w_v = mk();
        let mut w_g = mk();
        let w_o = mk();
        // Zero gate projection starts every gate at 0.5.
        w_g = w_g.scale(0.0);
        Self {
            w_q,
            w_k,
            w_v,
            w_g,
            w_o,
            phi1,
            phi2,
            gate: GateKind::Sigmoid,
            norm_by_len: true,
            causal: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }
}

/// Simple gated linear unit: (o ⊙ sigmoid(x w_g)) w_o.
pub fn sglu(x: &Matrix, o: &Matrix, w_g: &Matrix, w_o: &Matrix) -> Result<Matrix, ModelError> {
    if x.cols() != w_g.rows() || !x.same_shape(o) || o.cols() != w_o.rows() {
        return Err(ModelError::ShapeMismatch {
            context: "sglu",
            expected: format!("x {} conformable with w_g {} and w_o {}", x.shape_str(), w_g.shape_str(), w_o.shape_str()),
            found: o.shape_str(),
        });
    }
    let gate = x.matmul(w_g).map(sigmoid);
    Ok(o.hadamard(&gate).matmul(w_o))
}

#[derive(Debug, Clone)]
pub struct QluLayer {
    pub params: LayerParams,
}

pub struct QluCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    saved: Option<QlaSaved>,
    /// Attention output after the 1/N normalization.
    o: Matrix,
    g: Matrix,
    norm: f64,
}

#[derive(Debug, Clone)]
pub struct QluGrads {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_g: Matrix,
    pub w_o: Matrix,
}

impl QluLayer {
    pub fn new(params: LayerParams) -> Self {
        assert!(
            !(params.causal && params.phi2 != ActivationKind::Identity),
            "causal path supports identity outer activation only"
        );
        Self { params }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, QluCache) {
        let p = &self.params;
        let s = x.rows();
        let q = x.matmul(&p.w_q);
        let k = x.matmul(&p.w_k);
        let v = x.matmul(&p.w_v);
        let (attn, saved) = if p.causal {
            (causal_qla_forward(&q, &k, &v, p.phi1), None)
        } else {
            let split = SourceTargetSplit::sources_only(q.clone(), k.clone(), v.clone())
                .expect("projection shapes agree");
            let (o_s, _, saved) = qla_forward(&split, p.phi1, p.phi2);
            (o_s, Some(saved))
        };
        let norm = if p.norm_by_len { s as f64 } else { 1.0 };
        let o = attn.scale(1.0 / norm);
        let g = match p.gate {
            GateKind::Sigmoid => x.matmul(&p.w_g).map(sigmoid),
            GateKind::Open => Matrix::filled(s, x.cols(), 1.0),
        };
        let y = o.hadamard(&g).matmul(&p.w_o);
        let out = x.add(&y);
        (out, QluCache { x: x.clone(), q, k, v, saved, o, g, norm })
    }

    pub fn backward(&self, cache: &QluCache, d_out: &Matrix) -> (Matrix, QluGrads) {
        let p = &self.params;
        let h = cache.o.hadamard(&cache.g);
        let d_wo = h.matmul_ta(d_out);
        let dh = d_out.matmul_tb(&p.w_o);
        let d_o = dh.hadamard(&cache.g);
        let mut dx = d_out.clone(); // residual

        let d_wg = match p.gate {
            GateKind::Sigmoid => {
                let dg = dh.hadamard(&cache.o);
                let one_minus_g = cache.g.map(|v| 1.0 - v);
                let d_pre = dg.hadamard(&cache.g).hadamard(&one_minus_g);
                dx.add_assign(&d_pre.matmul_tb(&p.w_g));
                cache.x.matmul_ta(&d_pre)
            }
            GateKind::Open => Matrix::zeros(p.w_g.rows(), p.w_g.cols()),
        };

        let d_attn = d_o.scale(1.0 / cache.norm);
        let (dq, dk, dv) = if p.causal {
            causal_qla_backward(&cache.q, &cache.k, &cache.v, p.phi1, &d_attn)
        } else {
            let split = SourceTargetSplit::sources_only(cache.q.clone(), cache.k.clone(), cache.v.clone())
                .expect("cached shapes agree");
            let d = cache.x.cols();
            let grads = qla_backward_general(
                cache.saved.as_ref().expect("full path saved"),
                &split,
                &d_attn,
                &Matrix::zeros(0, d),
            )
            .expect("shapes validated in forward");
            (grads.d_qs, grads.d_ks, grads.d_vs)
        };

        let d_wq = cache.x.matmul_ta(&dq);
        dx.add_assign(&dq.matmul_tb(&p.w_q));
        let d_wk = cache.x.matmul_ta(&dk);
        dx.add_assign(&dk.matmul_tb(&p.w_k));
        let d_wv = cache.x.matmul_ta(&dv);
        dx.add_assign(&dv.matmul_tb(&p.w_v));

        (dx, QluGrads { w_q: d_wq, w_k: d_wk, w_v: d_wv, w_g: d_wg, w_o: d_wo })
    }

    pub fn visit_params(&self, prefix: &str, f: &mut impl FnMut(String, &Matrix)) {
        let p = &self.params;
        for (n, m) in [("wq", &p.w_q), ("wk", &p.w_k), ("wv", &p.w_v), ("wg", &p.w_g), ("wo", &p.w_o)] {
            f(format!("{prefix}.{n}"), m);
        }
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Matrix)) {
        let p = &mut self.params;
        for (n, m) in [
            ("wq", &mut p.w_q),
            ("wk", &mut p.w_k),
            ("wv", &mut p.w_v),
            ("wg", &mut p.w_g),
            ("wo", &mut p.w_o),
        ] {
            f(format!("{prefix}.{n}"), m);
        }
    }

    pub fn grads_into(&self, prefix: &str, g: QluGrads, out: &mut BTreeMap<String, Matrix>) {
        out.insert(format!("{prefix}.wq"), g.w_q);
        out.insert(format!("{prefix}.wk"), g.w_k);
        out.insert(format!("{prefix}.wv"), g.w_v);
        out.insert(format!("{prefix}.wg"), g.w_g);
        out.insert(format!("{prefix}.wo"), g.w_o);
    }
}

/// Causal quasi-linear attention over a single sequence: position i attends
/// positions j <= i through the running φ(K)ᵀV state. Identity outer
/// activation only.
fn causal_qla_forward(q: &Matrix, k: &Matrix, v: &Matrix, phi: ActivationKind) -> Matrix {
    let (s, d) = (q.rows(), q.cols());
    let aq = activation(phi, q);
    let ak = activation(phi, k);
    let mut z = vec![0.0; d * d];
    let mut out = Matrix::zeros(s, d);
    for i in 0..s {
        let ak_row = ak.row(i);
        let v_row = v.row(i);
        for (l, &a) in ak_row.iter().enumerate() {
            let z_row = &mut z[l * d..(l + 1) * d];
            for (zz, &vv) in z_row.iter_mut().zip(v_row) {
                *zz += a * vv;
            }
        }
        let aq_row = aq.row(i);
        let out_row = out.row_mut(i);
        for (l, &a) in aq_row.iter().enumerate() {
            let z_row = &z[l * d..(l + 1) * d];
            for (o, &zz) in out_row.iter_mut().zip(z_row) {
                *o += a * zz;
            }
        }
    }
    out
}

fn causal_qla_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    phi: ActivationKind,
    d_out: &Matrix,
) -> (Matrix, Matrix, Matrix) {
    let (s, d) = (q.rows(), q.cols());
    let aq = activation(phi, q);
    let ak = activation(phi, k);

    // Forward scan rebuilds the running state for dQ.
    let mut z = vec![0.0; d * d];
    let mut d_q = Matrix::zeros(s, d);
    for i in 0..s {
        let ak_row = ak.row(i);
        let v_row = v.row(i);
        for (l, &a) in ak_row.iter().enumerate() {
            let z_row = &mut z[l * d..(l + 1) * d];
            for (zz, &vv) in z_row.iter_mut().zip(v_row) {
                *zz += a * vv;
            }
        }
        // d aq_i = dO_i Z_iᵀ.
        let dout_row = d_out.row(i);
        let dq_row = d_q.row_mut(i);
        for (l, dq_val) in dq_row.iter_mut().enumerate() {
            let z_row = &z[l * d..(l + 1) * d];
            *dq_val = crate::numerics::matrix::dot(dout_row, z_row);
        }
    }
    d_q = d_q.hadamard(&activation_prime(phi, q));

    // Reverse scan accumulates W_j = Σ_{i>=j} aq_i ⊗ dO_i for dK, dV.
    let mut w = vec![0.0; d * d];
    let mut d_k = Matrix::zeros(s, d);
    let mut d_v = Matrix::zeros(s, d);
    for j in (0..s).rev() {
        let aq_row = aq.row(j);
        let dout_row = d_out.row(j);
        for (l, &a) in aq_row.iter().enumerate() {
            let w_row = &mut w[l * d..(l + 1) * d];
            for (ww, &dd) in w_row.iter_mut().zip(dout_row) {
                *ww += a * dd;
            }
        }
        let v_row = v.row(j);
        let ak_row = ak.row(j);
        let dk_row = d_k.row_mut(j);
        for (l, dk_val) in dk_row.iter_mut().enumerate() {
            let w_row = &w[l * d..(l + 1) * d];
            *dk_val = crate::numerics::matrix::dot(w_row, v_row);
        }
        let dv_row = d_v.row_mut(j);
        for (c, dv_val) in dv_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (l, &a) in ak_row.iter().enumerate() {
                acc += w[l * d + c] * a;
            }
            *dv_val = acc;
        }
    }
    d_k = d_k.hadamard(&activation_prime(phi, k));
    (d_q, d_k, d_v)
}
