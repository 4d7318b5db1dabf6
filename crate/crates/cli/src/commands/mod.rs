pub mod bench;
pub mod eval;
pub mod export_cache;
pub mod gradcheck;
pub mod infer;
pub mod train;

use crate::CliError;
use std::path::Path;
use vista_core::data::{ingest_csv, CsvSchema, SyntheticWorld};
use vista_core::model::SequenceBatch;

/// Loads batches from either a synthetic-config TOML (the held-out user
/// range) or a CSV file.
pub fn load_eval_batches(data: &Path, model_dim: usize) -> Result<Vec<SequenceBatch>, CliError> {
    match data.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let schema = CsvSchema { embed_dim: model_dim, ..CsvSchema::default() };
            let ingest = ingest_csv(data, &schema)
                .map_err(|e| match e {
                    vista_core::data::DataError::Io(_) | vista_core::data::DataError::Csv(_) => {
                        CliError::Io(e.to_string())
                    }
                    _ => CliError::Config(e.to_string()),
                })?;
            if ingest.skipped > 0 {
                eprintln!("note: skipped {} malformed CSV rows", ingest.skipped);
            }
            Ok(ingest.batches)
        }
        _ => {
            let cfg = crate::config::RunConfig::load(data)?;
            let world = SyntheticWorld::new(cfg.synth_config())
                .map_err(|e| CliError::Config(e.to_string()))?;
            let (lo, hi) = cfg.eval_users();
            Ok(world.stream(lo, hi).collect())
        }
    }
}

pub fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    println!("{text}");
    if let Some(p) = path {
        std::fs::write(p, text.as_bytes())?;
    }
    Ok(())
}
