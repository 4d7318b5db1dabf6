//! MLP prediction head: ReLU hidden layers, a scalar logit, sigmoid output,
//! binary cross-entropy training.

use crate::numerics::activation::sigmoid;
use crate::numerics::Matrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

/// Probabilities are clamped into [CLAMP, 1-CLAMP] inside the loss so a
/// saturated logit cannot produce an infinite cross-entropy.
pub const CLAMP: f64 = 1e-12;

pub(crate) fn uniform(rng: &mut StdRng, scale: f64) -> f64 {
    if scale > 0.0 {
        rng.gen_range(-scale..scale)
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct PredictionHead {
    /// Hidden layers then the final 1-column logit layer.
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

pub struct HeadCache {
    /// Pre-activations per layer.
    pre: Vec<Matrix>,
    /// Layer inputs (post-activation of the previous layer), including x.
    inputs: Vec<Matrix>,
    pub probs: Vec<f64>,
}

impl PredictionHead {
    pub fn new(input_dim: usize, hidden: &[usize], init_scale: f64, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut prev = input_dim;
        for &h in hidden.iter().chain(std::iter::once(&1usize)) {
            let scale = init_scale / (prev as f64).sqrt();
            weights.push(Matrix::from_raw(prev, h, (0..prev * h).map(|_| uniform(&mut rng, scale)).collect()));
            biases.push(Matrix::zeros(1, h));
            prev = h;
        }
        Self { weights, biases }
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn forward(&self, x: &Matrix) -> HeadCache {
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::new();
        let mut z = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = z.matmul(w);
            for i in 0..a.rows() {
                for (av, &bv) in a.row_mut(i).iter_mut().zip(b.row(0)) {
                    *av += bv;
                }
            }
            pre.push(a.clone());
            if l + 1 < self.weights.len() {
                z = a.map(|v| v.max(0.0));
                inputs.push(z.clone());
            } else {
                z = a;
            }
        }
        let probs = (0..z.rows()).map(|i| sigmoid(z.get(i, 0))).collect();
        HeadCache { pre, inputs, probs }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        self.forward(x).probs
    }

    /// Mean binary cross-entropy of cached probabilities against labels.
    pub fn bce(probs: &[f64], labels: &[u8]) -> f64 {
        assert_eq!(probs.len(), labels.len());
        let mut loss = 0.0;
        for (&p, &y) in probs.iter().zip(labels) {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            loss -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
        }
        loss / probs.len() as f64
    }

    /// Backward from BCE; returns d(input) and stores parameter gradients as
    /// "{prefix}.w{l}" / "{prefix}.b{l}".
    pub fn backward_bce(
        &self,
        cache: &HeadCache,
        labels: &[u8],
        prefix: &str,
        grads: &mut BTreeMap<String, Matrix>,
    ) -> Matrix {
        let m = labels.len();
        // dL/dlogit for mean BCE with sigmoid output.
        let mut d = Matrix::zeros(m, 1);
        for i in 0..m {
            d.set(i, 0, (cache.probs[i] - f64::from(labels[i])) / m as f64);
        }
        self.backward_from_logit_grad(cache, &d, prefix, grads)
    }

    pub fn backward_from_logit_grad(
        &self,
        cache: &HeadCache,
        d_logit: &Matrix,
        prefix: &str,
        grads: &mut BTreeMap<String, Matrix>,
    ) -> Matrix {
        let mut d = d_logit.clone();
        for l in (0..self.weights.len()).rev() {
            if l + 1 < self.weights.len() {
                // Through the ReLU of this layer's output.
                d = d.hadamard(&cache.pre[l].map(|v| if v > 0.0 { 1.0 } else { 0.0 }));
            }
            let x_in = &cache.inputs[l];
            let dw = x_in.matmul_ta(&d);
            let mut db = Matrix::zeros(1, d.cols());
            for i in 0..d.rows() {
                for (bv, &dv) in db.row_mut(0).iter_mut().zip(d.row(i)) {
                    *bv += dv;
                }
            }
            grads.insert(format!("{prefix}.w{l}"), dw);
            grads.insert(format!("{prefix}.b{l}"), db);
            d = d.matmul_tb(&self.weights[l]);
        }
        d
    }

    pub fn visit_params(&self, prefix: &str, f: &mut impl FnMut(String, &Matrix)) {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            f(format!("{prefix}.w{l}"), w);
            f(format!("{prefix}.b{l}"), b);
        }
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Matrix)) {
        for (l, (w, b)) in self.weights.iter_mut().zip(self.biases.iter_mut()).enumerate() {
            f(format!("{prefix}.w{l}"), w);
            f(format!("{prefix}.b{l}"), b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;

    #[test]
    fn zero_weights_output_sigmoid_of_bias() {
        let mut head = PredictionHead::new(4, &[3], 0.0, 1);
        head.biases[1].set(0, 0, 0.7);
        let x = Matrix::filled(2, 4, 1.0);
        let p = head.predict(&x);
        for v in p {
            assert!((v - sigmoid(0.7)).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_logit_probability_and_finite_loss() {
        let mut head = PredictionHead::new(1, &[], 0.0, 1);
        head.weights[0].set(0, 0, 50.0);
        head.biases[0].set(0, 0, 0.0);
        let x = Matrix::filled(1, 1, 1.0);
        let p = head.predict(&x);
        // sigmoid(50) = 1 - 2e-22, which rounds to 1.0 in f64.
        assert!(p[0] >= 1.0 - 1e-20);
        assert!(PredictionHead::bce(&p, &[0]).is_finite());
    }

    #[test]
    fn forward_matches_independent_recomputation() {
        let head = PredictionHead::new(3, &[5, 4], 0.3, 9);
        let x = Matrix::from_vec(2, 3, vec![0.3, -0.7, 1.1, 0.0, 0.4, -0.2]).unwrap();
        let got = head.predict(&x);
        // Recompute by explicit scalar loops.
        for i in 0..2 {
            let mut z: Vec<f64> = x.row(i).to_vec();
            for l in 0..head.weights.len() {
                let w = &head.weights[l];
                let mut nz = vec![0.0; w.cols()];
                for (j, nv) in nz.iter_mut().enumerate() {
                    let mut acc = head.biases[l].get(0, j);
                    for (i2, &zv) in z.iter().enumerate() {
                        acc += zv * w.get(i2, j);
                    }
                    *nv = acc;
                }
                if l + 1 < head.weights.len() {
                    for v in nz.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
                z = nz;
            }
            assert!((got[i] - sigmoid(z[0])).abs() < 1e-14);
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let head = PredictionHead::new(3, &[4], 0.4, 11);
        let x = Matrix::from_vec(2, 3, vec![0.2, -0.4, 0.6, -0.1, 0.5, 0.3]).unwrap();
        let labels = [1u8, 0u8];
        let cache = head.forward(&x);
        let mut grads = BTreeMap::new();
        let dx = head.backward_bce(&cache, &labels, "head", &mut grads);

        let fd_dx = finite_diff_grad(
            |xm| PredictionHead::bce(&head.forward(xm).probs, &labels),
            &x,
            1e-6,
        )
        .unwrap();
        assert!(dx.max_abs_diff(&fd_dx) < 1e-8);

        // Weight gradient of the first layer.
        let fd_w0 = finite_diff_grad(
            |wm| {
                let mut h2 = head.clone();
                h2.weights[0] = wm.clone();
                PredictionHead::bce(&h2.forward(&x).probs, &labels)
            },
            &head.weights[0],
            1e-6,
        )
        .unwrap();
        assert!(grads["head.w0"].max_abs_diff(&fd_w0) < 1e-8);
    }
}
