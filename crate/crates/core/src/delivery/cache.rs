//! Versioned in-memory summary cache: many readers, one logical writer,
//! reads always observe a complete entry (entries are swapped as Arcs under
//! an RwLock, never mutated in place).

use super::codec::{encode_summary, fnv1a};
use super::quant::{dequantize, QuantizedSummary};
use super::DeliveryError;
use crate::numerics::Matrix;
use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, RwLock};

#[derive(Debug)]
pub struct SummaryCache {
    // Newest version at the front; bounded to `history_depth` entries.
    entries: RwLock<BTreeMap<u64, VecDeque<Arc<QuantizedSummary>>>>,
    history_depth: usize,
}

impl SummaryCache {
    pub fn new(history_depth: usize) -> Self {
        assert!(history_depth >= 1, "history depth must be >= 1");
        Self { entries: RwLock::new(BTreeMap::new()), history_depth }
    }

    /// Inserts a summary if it is newer than the user's cached latest.
    /// Returns false (and changes nothing) otherwise, which makes replay
    /// idempotent.
    pub fn apply(&self, summary: Arc<QuantizedSummary>) -> bool {
        let mut entries = self.entries.write().unwrap();
        let versions = entries.entry(summary.user_id).or_default();
        if let Some(front) = versions.front() {
            if summary.version <= front.version {
                return false;
            }
        }
        versions.push_front(summary);
        while versions.len() > self.history_depth {
            versions.pop_back();
        }
        true
    }

    pub fn get_latest(&self, user_id: u64) -> Option<Arc<QuantizedSummary>> {
        self.entries.read().unwrap().get(&user_id)?.front().cloned()
    }

    /// Greatest retained version <= `version_bound`.
    pub fn get_at(&self, user_id: u64, version_bound: u64) -> Option<Arc<QuantizedSummary>> {
        self.entries
            .read()
            .unwrap()
            .get(&user_id)?
            .iter()
            .find(|s| s.version <= version_bound)
            .cloned()
    }

    pub fn user_count(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn users(&self) -> Vec<u64> {
        self.entries.read().unwrap().keys().copied().collect()
    }

    pub fn history_depth(&self) -> usize {
        self.history_depth
    }

    /// All retained entries ordered by (user, version descending).
    pub fn all_entries(&self) -> Vec<Arc<QuantizedSummary>> {
        self.entries
            .read()
            .unwrap()
            .values()
            .flat_map(|v| v.iter().cloned())
            .collect()
    }

    /// Deterministic digest of the full cache state: users in key order,
    /// versions newest first, entry bytes hashed with FNV-1a.
    pub fn state_hash(&self) -> u64 {
        let entries = self.entries.read().unwrap();
        let mut h = 0u64;
        let mut buf = Vec::new();
        for versions in entries.values() {
            for s in versions {
                buf.clear();
                encode_summary(s, &mut buf);
                h = fnv1a(&buf, h);
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct FetchResult {
    pub tokens: Matrix,
    pub served_version: u64,
    /// current_version - served_version; measured, fatal only in strict mode.
    pub lag: u64,
}

/// Retrieves and dequantizes the latest cached tokens for a user. Lag is
/// reported relative to `current_version`; with `strict` set, a lag above
/// `max_staleness` is an error instead.
pub fn fetch_for_inference(
    cache: &SummaryCache,
    user_id: u64,
    current_version: u64,
    max_staleness: u64,
    strict: bool,
) -> Result<FetchResult, DeliveryError> {
    let summary = cache
        .get_latest(user_id)
        .ok_or(DeliveryError::UserNotFound { user_id })?;
    let lag = current_version.saturating_sub(summary.version);
    if strict && lag > max_staleness {
        return Err(DeliveryError::StalenessExceeded { user_id, lag, max: max_staleness });
    }
    Ok(FetchResult { tokens: dequantize(&summary), served_version: summary.version, lag })
}
