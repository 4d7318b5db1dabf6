//! Target-aware attention: every candidate independently attends the k
//! summary tokens (plus itself, by default) through a standard softmax
//! transformer block with a residual.
//!
//! Candidates are processed one at a time with identical code paths, so a
//! candidate's output is bitwise invariant to the presence or order of the
//! other candidates in the batch.

use crate::numerics::matrix::dot;
use crate::numerics::Matrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct TargetLayer {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    /// Whether the candidate itself joins the key/value set.
    pub include_self: bool,
}

pub struct TargetCache {
    cands_in: Matrix,
    /// Token projections, shared across candidates.
    k_tok: Matrix,
    v_tok: Matrix,
    /// Per-candidate: scaled query, candidate key/value rows, probabilities,
    /// attended vector.
    per_cand: Vec<CandCache>,
}

struct CandCache {
    q: Vec<f64>,
    k_self: Vec<f64>,
    v_self: Vec<f64>,
    p: Vec<f64>,
    a: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TargetGrads {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
}

impl TargetLayer {
    pub fn new(dim: usize, include_self: bool, init_scale: f64, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let scale = init_scale / (dim as f64).sqrt();
        let mut mk = || {
            Matrix::from_raw(dim, dim, (0..dim * dim).map(|_| rng.gen_range(-scale..scale)).collect())
        };
        Self { w_q: mk(), w_k: mk(), w_v: mk(), w_o: mk(), include_self }
    }

    pub fn forward(&self, tokens: &Matrix, cands: &Matrix) -> (Matrix, TargetCache) {
        let d = cands.cols();
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();
        let k_tok = tokens.matmul(&self.w_k);
        let v_tok = tokens.matmul(&self.w_v);
        let n_keys = tokens.rows() + usize::from(self.include_self);
        let mut out = Matrix::zeros(cands.rows(), d);
        let mut per_cand = Vec::with_capacity(cands.rows());
        for c in 0..cands.rows() {
            let cand = cands.slice_rows(c, c + 1);
            let q: Vec<f64> = cand.matmul(&self.w_q).scale(inv_sqrt_d).row(0).to_vec();
            let (k_self, v_self) = if self.include_self {
                (cand.matmul(&self.w_k).row(0).to_vec(), cand.matmul(&self.w_v).row(0).to_vec())
            } else {
                (Vec::new(), Vec::new())
            };
            let mut p = Vec::with_capacity(n_keys);
            let mut max = f64::NEG_INFINITY;
            for j in 0..tokens.rows() {
                let s = dot(&q, k_tok.row(j));
                p.push(s);
                max = max.max(s);
            }
            if self.include_self {
                let s = dot(&q, &k_self);
                p.push(s);
                max = max.max(s);
            }
            let mut sum = 0.0;
            for s in p.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            let inv = 1.0 / sum;
            for s in p.iter_mut() {
                *s *= inv;
            }
            let mut a = vec![0.0; d];
            for j in 0..tokens.rows() {
                let w = p[j];
                for (av, &vv) in a.iter_mut().zip(v_tok.row(j)) {
                    *av += w * vv;
                }
            }
            if self.include_self {
                let w = p[n_keys - 1];
                for (av, &vv) in a.iter_mut().zip(&v_self) {
                    *av += w * vv;
                }
            }
            let a_mat = Matrix::from_raw(1, d, a.clone());
            let y = a_mat.matmul(&self.w_o);
            for (o, (&cv, &yv)) in out.row_mut(c).iter_mut().zip(cand.row(0).iter().zip(y.row(0))) {
                *o = cv + yv;
            }
            per_cand.push(CandCache { q, k_self, v_self, p, a });
        }
        (out, TargetCache { cands_in: cands.clone(), k_tok, v_tok, per_cand })
    }

    /// Returns (d_tokens, d_cands, parameter grads).
    pub fn backward(
        &self,
        tokens: &Matrix,
        cache: &TargetCache,
        d_out: &Matrix,
    ) -> (Matrix, Matrix, TargetGrads) {
        let d = cache.cands_in.cols();
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();
        let n_tok = tokens.rows();
        let mut d_tokens = Matrix::zeros(n_tok, d);
        let mut d_cands = d_out.clone(); // residual
        let mut d_k_tok = Matrix::zeros(n_tok, d);
        let mut d_v_tok = Matrix::zeros(n_tok, d);
        let mut g = TargetGrads {
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
            w_o: Matrix::zeros(d, d),
        };
        for c in 0..cache.cands_in.rows() {
            let cc = &cache.per_cand[c];
            let cand = cache.cands_in.slice_rows(c, c + 1);
            let d_out_row = Matrix::from_raw(1, d, d_out.row(c).to_vec());
            // out = cand + a w_o.
            let a_mat = Matrix::from_raw(1, d, cc.a.clone());
            g.w_o.add_assign(&a_mat.matmul_ta(&d_out_row));
            let da = d_out_row.matmul_tb(&self.w_o); // 1×d

            // Softmax attention backward over this candidate's keys.
            let n_keys = cc.p.len();
            let mut dp = vec![0.0; n_keys];
            for j in 0..n_tok {
                dp[j] = dot(da.row(0), cache.v_tok.row(j));
            }
            if self.include_self {
                dp[n_keys - 1] = dot(da.row(0), &cc.v_self);
            }
            let inner: f64 = dp.iter().zip(&cc.p).map(|(a, b)| a * b).sum();
            let ds: Vec<f64> = cc.p.iter().zip(&dp).map(|(&p, &dpj)| p * (dpj - inner)).collect();

            let mut dq = vec![0.0; d];
            for j in 0..n_tok {
                let s = ds[j];
                for (dqv, &kv) in dq.iter_mut().zip(cache.k_tok.row(j)) {
                    *dqv += s * kv;
                }
                let dk_row = d_k_tok.row_mut(j);
                for (dkv, &qv) in dk_row.iter_mut().zip(&cc.q) {
                    *dkv += s * qv;
                }
                let w = cc.p[j];
                let dv_row = d_v_tok.row_mut(j);
                for (dvv, &dav) in dv_row.iter_mut().zip(da.row(0)) {
                    *dvv += w * dav;
                }
            }
            if self.include_self {
                // The candidate's own key participates in the query grad too.
                let s = ds[n_keys - 1];
                for (dqv, &kv) in dq.iter_mut().zip(&cc.k_self) {
                    *dqv += s * kv;
                }
            }
            let dq_raw = Matrix::from_raw(1, d, dq).scale(inv_sqrt_d);
            g.w_q.add_assign(&cand.matmul_ta(&dq_raw));
            d_cands
                .row_mut(c)
                .iter_mut()
                .zip(dq_raw.matmul_tb(&self.w_q).row(0))
                .for_each(|(o, &v)| *o += v);

            if self.include_self {
                let s = ds[n_keys - 1];
                let dk_self: Vec<f64> = cc.q.iter().map(|&qv| s * qv).collect();
                let w = cc.p[n_keys - 1];
                let dv_self: Vec<f64> = da.row(0).iter().map(|&dav| w * dav).collect();
                let dk_m = Matrix::from_raw(1, d, dk_self);
                let dv_m = Matrix::from_raw(1, d, dv_self);
                g.w_k.add_assign(&cand.matmul_ta(&dk_m));
                g.w_v.add_assign(&cand.matmul_ta(&dv_m));
                d_cands
                    .row_mut(c)
                    .iter_mut()
                    .zip(dk_m.matmul_tb(&self.w_k).row(0))
                    .for_each(|(o, &v)| *o += v);
                d_cands
                    .row_mut(c)
                    .iter_mut()
                    .zip(dv_m.matmul_tb(&self.w_v).row(0))
                    .for_each(|(o, &v)| *o += v);
            }
        }
        // Token projections are shared: fold their accumulated grads once.
        g.w_k.add_assign(&tokens.matmul_ta(&d_k_tok));
        g.w_v.add_assign(&tokens.matmul_ta(&d_v_tok));
        d_tokens.add_assign(&d_k_tok.matmul_tb(&self.w_k));
        d_tokens.add_assign(&d_v_tok.matmul_tb(&self.w_v));
        (d_tokens, d_cands, g)
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

    pub fn grads_into(&self, prefix: &str, g: TargetGrads, out: &mut BTreeMap<String, Matrix>) {
        let entry = |name: &str| format!("{prefix}.{name}");
        for (n, m) in [("wq", g.w_q), ("wk", g.w_k), ("wv", g.w_v), ("wo", g.w_o)] {
            match out.entry(entry(n)) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(m);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    e.get_mut().add_assign(&m);
                }
            }
        }
    }
}
