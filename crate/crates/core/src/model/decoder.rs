//! Causal softmax transformer block and the off-by-one reconstruction loss.
//!
//! The decoder consumes [seeds; history]; causality guarantees output v_i
//! (at position k+i-1) sees only the seeds and u_1..u_i, so predicting
//! u_{i+1} from v_i leaks nothing. Rows iterate only their allowed prefix,
//! which makes the no-leak property exact to the bit.

use crate::numerics::matrix::dot;
use crate::numerics::Matrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
}

pub struct DecoderCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Row-stochastic lower-triangular attention probabilities.
    p: Matrix,
    a: Matrix,
}

impl DecoderBlock {
    pub fn new(dim: usize, init_scale: f64, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let scale = init_scale / (dim as f64).sqrt();
        let mut mk = || {
            Matrix::from_raw(dim, dim, (0..dim * dim).map(|_| rng.gen_range(-scale..scale)).collect())
        };
        Self { w_q: mk(), w_k: mk(), w_v: mk(), w_o: mk() }
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, DecoderCache) {
        let (s, d) = (x.rows(), x.cols());
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();
        let q = x.matmul(&self.w_q).scale(inv_sqrt_d);
        let k = x.matmul(&self.w_k);
        let v = x.matmul(&self.w_v);
        let mut p = Matrix::zeros(s, s);
        let mut a = Matrix::zeros(s, d);
        for i in 0..s {
            let q_row = q.row(i);
            let p_row = p.row_mut(i);
            let mut max = f64::NEG_INFINITY;
            for j in 0..=i {
                let sc = dot(q_row, k.row(j));
                p_row[j] = sc;
                max = max.max(sc);
            }
            let mut sum = 0.0;
            for pj in p_row.iter_mut().take(i + 1) {
                *pj = (*pj - max).exp();
                sum += *pj;
            }
            let inv = 1.0 / sum;
            for pj in p_row.iter_mut().take(i + 1) {
                *pj *= inv;
            }
        }
        // Second pass accumulates the weighted values.
        for i in 0..s {
            let a_row = a.row_mut(i);
            for j in 0..=i {
                let w = p.get(i, j);
                for (av, &vv) in a_row.iter_mut().zip(v.row(j)) {
                    *av += w * vv;
                }
            }
        }
        let out = x.add(&a.matmul(&self.w_o));
        (out, DecoderCache { x: x.clone(), q, k, v, p, a })
    }

    /// Backward through the block; parameter grads are stored under
    /// "{prefix}.wq" etc., and the input gradient is returned.
    pub fn backward(
        &self,
        cache: &DecoderCache,
        d_out: &Matrix,
        prefix: &str,
        grads: &mut BTreeMap<String, Matrix>,
    ) -> Matrix {
        let (s, d) = (cache.x.rows(), cache.x.cols());
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();
        let mut dx = d_out.clone(); // residual

        let d_wo = cache.a.matmul_ta(d_out);
        let da = d_out.matmul_tb(&self.w_o);

        let mut dq = Matrix::zeros(s, d);
        let mut dk = Matrix::zeros(s, d);
        let mut dv = Matrix::zeros(s, d);
        let mut dp_row = vec![0.0; s];
        for i in 0..s {
            let da_row = da.row(i);
            // dP_ij = da_i . v_j, then softmax backward within the row.
            let mut inner = 0.0;
            for j in 0..=i {
                dp_row[j] = dot(da_row, cache.v.row(j));
                inner += dp_row[j] * cache.p.get(i, j);
            }
            for j in 0..=i {
                let ds = cache.p.get(i, j) * (dp_row[j] - inner);
                // dq_i += ds * k_j; dk_j += ds * q_i; dv_j += p_ij * da_i.
                let k_row = cache.k.row(j);
                let dq_row = dq.row_mut(i);
                for (dqv, &kv) in dq_row.iter_mut().zip(k_row) {
                    *dqv += ds * kv;
                }
                let q_row = cache.q.row(i);
                let dk_row = dk.row_mut(j);
                for (dkv, &qv) in dk_row.iter_mut().zip(q_row) {
                    *dkv += ds * qv;
                }
                let w = cache.p.get(i, j);
                let dv_row = dv.row_mut(j);
                for (dvv, &dav) in dv_row.iter_mut().zip(da_row) {
                    *dvv += w * dav;
                }
            }
        }
        let dq_raw = dq.scale(inv_sqrt_d);
        grads.insert(format!("{prefix}.wq"), cache.x.matmul_ta(&dq_raw));
        dx.add_assign(&dq_raw.matmul_tb(&self.w_q));
        grads.insert(format!("{prefix}.wk"), cache.x.matmul_ta(&dk));
        dx.add_assign(&dk.matmul_tb(&self.w_k));
        grads.insert(format!("{prefix}.wv"), cache.x.matmul_ta(&dv));
        dx.add_assign(&dv.matmul_tb(&self.w_v));
        grads.insert(format!("{prefix}.wo"), d_wo);
        dx
    }

    pub fn visit_params(&self, prefix: &str, f: &mut impl FnMut(String, &Matrix)) {
        for (n, m) in [("wq", &self.w_q), ("wk", &self.w_k), ("wv", &self.w_v), ("wo", &self.w_o)] {
            f(format!("{prefix}.{n}"), m);
        }
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Matrix)) {
        for (n, m) in [
            ("wq", &mut self.w_q),
            ("wk", &mut self.w_k),
            ("wv", &mut self.w_v),
            ("wo", &mut self.w_o),
        ] {
            f(format!("{prefix}.{n}"), m);
        }
    }
}

/// Off-by-one reconstruction: sum over i in [1, M-1] of ‖v_i - u_{i+1}‖²
/// where v_i is decoder output row k+i-1 and u_{i+1} is history row i.
/// Returns (loss, d_loss/d_decoder_out, direct d_loss/d_uih term).
pub fn reconstruction_loss(dec_out: &Matrix, seed_count: usize, uih: &Matrix) -> (f64, Matrix, Matrix) {
    let m_hist = uih.rows();
    let mut d_out = Matrix::zeros(dec_out.rows(), dec_out.cols());
    let mut d_uih = Matrix::zeros(uih.rows(), uih.cols());
    let mut loss = 0.0;
    if m_hist >= 2 {
        for i in 1..m_hist {
            let v_row = dec_out.row(seed_count + i - 1);
            let u_row = uih.row(i);
            let d_o = d_out.row_mut(seed_count + i - 1);
            let d_u = d_uih.row_mut(i);
            for ((&vv, &uu), (dov, duv)) in
                v_row.iter().zip(u_row).zip(d_o.iter_mut().zip(d_u.iter_mut()))
            {
                let diff = vv - uu;
                loss += diff * diff;
                *dov += 2.0 * diff;
                *duv -= 2.0 * diff;
            }
        }
    }
    (loss, d_out, d_uih)
}
