//! `vista infer`: cached-summary inference. Runs only target attention and
//! the head on dequantized cached tokens; summarization never executes.
//!
//! Requests JSON: `[{"user_id": 7, "candidates": [{"item_id": 3,
//! "category_id": 1}, ...]}, ...]`.

use crate::CliError;
use serde::Deserialize;
use std::path::Path;
use vista_core::delivery::{fetch_for_inference, snapshot_load, DeliveryError};
use vista_core::model::checkpoint::load_model;

#[derive(Deserialize)]
struct Request {
    user_id: u64,
    candidates: Vec<Candidate>,
}

#[derive(Deserialize)]
struct Candidate {
    item_id: u64,
    category_id: u64,
}

pub fn run(
    cache_path: &Path,
    requests_path: &Path,
    checkpoint: &Path,
    strict_staleness: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(checkpoint)?;
    let cache = snapshot_load(cache_path)?;
    let text = std::fs::read_to_string(requests_path)?;
    let requests: Vec<Request> =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("requests JSON: {e}")))?;

    let strict = strict_staleness.is_some();
    let max_lag = strict_staleness.unwrap_or(u64::MAX);
    let mut results = Vec::with_capacity(requests.len());
    let mut errors = 0usize;
    for req in &requests {
        match fetch_for_inference(&cache, req.user_id, model.version, max_lag, strict) {
            Ok(fetched) => {
                let item_ids: Vec<u64> = req.candidates.iter().map(|c| c.item_id).collect();
                let cat_ids: Vec<u64> = req.candidates.iter().map(|c| c.category_id).collect();
                let probs = model.predict_from_tokens(&fetched.tokens, &item_ids, &cat_ids);
                results.push(serde_json::json!({
                    "user_id": req.user_id,
                    "probs": probs,
                    "served_version": fetched.served_version,
                    "lag": fetched.lag,
                }));
            }
            Err(e @ (DeliveryError::UserNotFound { .. } | DeliveryError::StalenessExceeded { .. })) => {
                errors += 1;
                results.push(serde_json::json!({
                    "user_id": req.user_id,
                    "error": e.to_string(),
                }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let report = serde_json::json!({
        "model_version": model.version,
        "results": results,
        "errors": errors,
    });
    super::write_json(out, &report)?;
    if strict && errors > 0 {
        return Err(CliError::Numeric(format!("{errors} requests failed under strict staleness")));
    }
    Ok(())
}
