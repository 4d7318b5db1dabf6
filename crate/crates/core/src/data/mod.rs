//! Synthetic sequence data with known ground truth, NE/AUC metrics, and
//! CSV ingestion for externally supplied sequences.

pub mod csv_io;
pub mod metrics;
pub mod synthetic;

pub use csv_io::{ingest_csv, write_csv, CsvIngest, CsvSchema};
pub use metrics::{auc, ne, EvalReport, LengthBucket};
pub use synthetic::{HashedEmbedder, SynthConfig, SyntheticWorld, WorldManifest};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("labels are degenerate (all identical); NE/AUC undefined")]
    DegenerateLabels,
    #[error("CSV header mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("CSV file has no data rows")]
    EmptyFile,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("CSV parse error: {0}")]
    Csv(#[from] csv::Error),
}

/// Splitmix64; used to derive independent per-user and per-id RNG seeds.
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
