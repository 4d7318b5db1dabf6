//! Elementwise activations used inside the quasi-linear attention kernels.

use super::matrix::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    /// Passthrough; reduces QLA to plain (unnormalized) linear attention.
    Identity,
    Silu,
    /// x for x >= 1, e^(x-1) otherwise. Strictly positive, C1 at the knee,
    /// and its derivative below the knee equals the function itself.
    ShiftedElu,
}

#[inline]
pub fn act_scalar(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Identity => x,
        ActivationKind::Silu => x * sigmoid(x),
        ActivationKind::ShiftedElu => {
            if x >= 1.0 {
                x
            } else {
                (x - 1.0).exp()
            }
        }
    }
}

#[inline]
pub fn act_prime_scalar(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Identity => 1.0,
        ActivationKind::Silu => {
            let s = sigmoid(x);
            s * (1.0 + x * (1.0 - s))
        }
        ActivationKind::ShiftedElu => {
            if x >= 1.0 {
                1.0
            } else {
                (x - 1.0).exp()
            }
        }
    }
}

pub fn activation(kind: ActivationKind, x: &Matrix) -> Matrix {
    match kind {
        ActivationKind::Identity => x.clone(),
        _ => x.map(|v| act_scalar(kind, v)),
    }
}

pub fn activation_prime(kind: ActivationKind, x: &Matrix) -> Matrix {
    match kind {
        ActivationKind::Identity => Matrix::filled(x.rows(), x.cols(), 1.0),
        _ => x.map(|v| act_prime_scalar(kind, v)),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
