//! Summary-embedding delivery: int8 quantization, an append-only export
//! log, a versioned in-memory cache, and checksummed snapshots.
//!
//! The production analogue is a message queue feeding a replicated
//! key-value store; here both routes run in one process with the same
//! semantics — append-only ordered delivery, eventual cache convergence,
//! and measured (not fatal) staleness. The log is the source of truth;
//! snapshots are derived state.

pub mod cache;
pub mod codec;
pub mod log;
pub mod quant;
pub mod snapshot;

pub use cache::{fetch_for_inference, FetchResult, SummaryCache};
pub use log::{consume, ExportLog, ExportRecord};
pub use quant::{dequantize, quantize, QuantizedSummary};
pub use snapshot::{snapshot_load, snapshot_save};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeliveryError {
    #[error("stale version for user {user_id}: attempted {attempted}, latest {latest}")]
    StaleVersion { user_id: u64, attempted: u64, latest: u64 },
    #[error("user {user_id} not present in cache")]
    UserNotFound { user_id: u64 },
    #[error("staleness exceeded for user {user_id}: lag {lag} > max {max}")]
    StalenessExceeded { user_id: u64, lag: u64, max: u64 },
    #[error("corrupt snapshot: {reason}")]
    CorruptSnapshot { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
