//! Two-stage attention for sequential recommendation.
//!
//! The library splits scoring a candidate item against an ultra-long user
//! interaction history (UIH) into two stages: a quasi-linear attention (QLA)
//! summarizer that compresses the history into a fixed number of summary
//! tokens, and a cheap softmax target-attention stage that scores candidates
//! against those tokens. Summary tokens are int8-quantized and served from a
//! versioned in-memory cache so inference never re-runs the summarizer.
//!
//! Module map:
//! - [`numerics`]: dense matrices, activations, finite-difference oracle
//! - [`attention`]: linear/quasi-linear/softmax attention kernels with
//!   analytic backward passes
//! - [`model`]: the two-stage model, manual backprop, Adam, checkpoints
//! - [`delivery`]: quantization, export log, versioned cache, snapshots
//! - [`data`]: synthetic sequence generator, NE/AUC metrics, CSV ingestion
//! - [`train`]: training/eval drivers shared by the CLI and the test suite
//! - [`bench`]: wall-clock scaling measurements for the kernels

pub mod alloc_stats;
pub mod attention;
pub mod bench;
pub mod data;
pub mod delivery;
pub mod gradcheck;
pub mod model;
pub mod numerics;
pub mod train;

pub use numerics::matrix::Matrix;
