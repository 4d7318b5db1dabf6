//! Attention kernels: linear attention with candidates, the dense masked
//! reference, quasi-linear attention (QLA) forward/backward, a blockwise
//! QLA forward, and the softmax baseline.
//!
//! Sequences carry a source part (the user history, length n) and a target
//! part (the candidates, length m). Sources attend to all sources; each
//! target attends to all sources plus itself only. Targets never attend
//! each other — scoring a candidate must not leak the other candidates in
//! the batch.

pub mod fast;
pub mod kernels;
pub mod qla;

pub use kernels::{
    delta_diag, diag_self_attn, lin_attn_self, lin_attn_target, mixed_masked_attn, softmax_attn,
    AttnMask, BoolMask,
};
pub use qla::{
    qla_backward, qla_backward_general, qla_forward, qla_forward_blockwise, QlaGrads, QlaSaved,
    SourceTargetSplit,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch { context: &'static str, expected: String, found: String },
    /// The row-normalized linear form divides by Q ColSum(K)ᵀ, which can
    /// vanish or flip sign for unconstrained K; we refuse rather than clamp.
    #[error("degenerate row normalizer at row {row}: |{value:e}| < 1e-12")]
    DegenerateNormalizer { row: usize, value: f64 },
    #[error("softmax row {row} has no unmasked entries")]
    FullyMaskedRow { row: usize },
    /// The analytic backward covers an identity outer activation only; the
    /// general path lives in `qla_backward_general`.
    #[error("analytic backward requires identity outer activation, saved pass used {phi2:?}")]
    UnsupportedOuterActivation { phi2: crate::numerics::ActivationKind },
}
