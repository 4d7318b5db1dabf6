//! Adam with per-tensor moment slots and a lazy row-sparse path for the
//! embedding tables (untouched rows keep their moments frozen; bias
//! correction uses the global step, as in the usual lazy variant).

use crate::numerics::Matrix;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    slots: BTreeMap<String, (Matrix, Matrix)>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, t: 0, slots: BTreeMap::new() }
    }

    pub fn with_defaults() -> Self {
        Self::new(1e-3, 0.9, 0.999, 1e-8)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Advances the shared step counter; call once per optimizer step before
    /// any `update`/`update_rows`.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    fn corrections(&self) -> (f64, f64) {
        let t = self.t.max(1) as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }

    pub fn update(&mut self, name: &str, param: &mut Matrix, grad: &Matrix) {
        assert!(param.same_shape(grad), "adam grad shape for {name}");
        let (bc1, bc2) = self.corrections();
        let (m, v) = self
            .slots
            .entry(name.to_string())
            .or_insert_with(|| (Matrix::zeros(param.rows(), param.cols()), Matrix::zeros(param.rows(), param.cols())));
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, g), (mm, vv)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *mm = b1 * *mm + (1.0 - b1) * g;
            *vv = b2 * *vv + (1.0 - b2) * g * g;
            let m_hat = *mm / bc1;
            let v_hat = *vv / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    /// Sparse update: only the listed rows advance.
    pub fn update_rows(&mut self, name: &str, param: &mut Matrix, rows: &BTreeMap<usize, Vec<f64>>) {
        let (bc1, bc2) = self.corrections();
        let (m, v) = self
            .slots
            .entry(name.to_string())
            .or_insert_with(|| (Matrix::zeros(param.rows(), param.cols()), Matrix::zeros(param.rows(), param.cols())));
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (&row, grad) in rows {
            assert_eq!(grad.len(), param.cols(), "adam row grad width for {name}");
            let p_row = param.row_mut(row);
            let m_row = m.row_mut(row);
            let v_row = v.row_mut(row);
            for (((p, &g), mm), vv) in p_row.iter_mut().zip(grad).zip(m_row.iter_mut()).zip(v_row.iter_mut()) {
                *mm = b1 * *mm + (1.0 - b1) * g;
                *vv = b2 * *vv + (1.0 - b2) * g * g;
                *p -= lr * (*mm / bc1) / ((*vv / bc2).sqrt() + eps);
            }
        }
    }
}
