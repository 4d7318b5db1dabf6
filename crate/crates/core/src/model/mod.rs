//! The two-stage model: virtual-seed summarization over the user history,
//! generative reconstruction through a causal decoder, target-aware softmax
//! attention over summary tokens, and an MLP prediction head — all with
//! hand-written backward passes feeding a lazy Adam optimizer.

pub mod adam;
pub mod baseline;
pub mod checkpoint;
pub mod decoder;
pub mod embedding;
pub mod head;
pub mod layers;
pub mod target;
pub mod vista;

pub use adam::Adam;
pub use baseline::BaselineModel;
pub use decoder::DecoderBlock;
pub use embedding::EmbeddingTable;
pub use head::PredictionHead;
pub use layers::{GateKind, LayerParams, QluLayer};
pub use target::TargetLayer;
pub use vista::{ModelConfig, VistaModel};

use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch { context: &'static str, expected: String, found: String },
    /// Training aborts the step without applying updates and names the first
    /// stage whose output went non-finite.
    #[error("non-finite loss (stage: {stage}, step {step})")]
    NonFiniteLoss { stage: &'static str, step: u64 },
    #[error(transparent)]
    Kernel(#[from] crate::attention::KernelError),
}

/// Learned seed embeddings, shared across users and prepended to every
/// history before summarization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VirtualSeeds {
    pub weights: Matrix,
}

impl VirtualSeeds {
    pub fn count(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Per-user summarization output: the first k rows of the summarizer stack,
/// stamped with the model version that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTokens {
    pub user_id: u64,
    pub version: u64,
    pub tokens: Matrix,
}

/// One user's training example: the interaction history (oldest first), the
/// candidate items to score, and their labels. Item/category ids are kept so
/// the learned embedding table can be refreshed and updated; the matrices
/// hold the current embeddings of those ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub user_id: u64,
    pub uih_item_ids: Vec<u64>,
    pub uih_cat_ids: Vec<u64>,
    pub cand_item_ids: Vec<u64>,
    pub cand_cat_ids: Vec<u64>,
    pub labels: Vec<u8>,
    pub uih: Matrix,
    pub candidates: Matrix,
}

impl SequenceBatch {
    pub fn history_len(&self) -> usize {
        self.uih_item_ids.len()
    }

    pub fn candidate_count(&self) -> usize {
        self.cand_item_ids.len()
    }
}
