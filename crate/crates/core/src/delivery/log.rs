//! In-process append-only export log with per-user version monotonicity,
//! plus an on-disk form (length-prefixed, CRC-checked records).

use super::cache::SummaryCache;
use super::codec::{crc32, decode_summary, encode_summary, Reader};
use super::quant::{quantize, QuantizedSummary};
use super::DeliveryError;
use crate::model::SummaryTokens;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone)]
pub struct ExportRecord {
    pub offset: u64,
    pub timestamp_micros: i64,
    pub summary: Arc<QuantizedSummary>,
}

#[derive(Debug, Default)]
pub struct ExportLog {
    records: Vec<ExportRecord>,
    last_versions: HashMap<u64, u64>,
}

impl ExportLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Quantizes the tokens and appends them. The version must strictly
    /// exceed the user's last published version.
    pub fn publish(&mut self, tokens: &SummaryTokens) -> Result<u64, DeliveryError> {
        if let Some(&latest) = self.last_versions.get(&tokens.user_id) {
            if tokens.version <= latest {
                return Err(DeliveryError::StaleVersion {
                    user_id: tokens.user_id,
                    attempted: tokens.version,
                    latest,
                });
            }
        }
        let offset = self.records.len() as u64;
        let summary = Arc::new(quantize(tokens.user_id, tokens.version, &tokens.tokens));
        let timestamp_micros = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as i64)
            .unwrap_or(0);
        self.records.push(ExportRecord { offset, timestamp_micros, summary });
        self.last_versions.insert(tokens.user_id, tokens.version);
        Ok(offset)
    }

    pub fn len(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records_from(&self, offset: u64) -> &[ExportRecord] {
        &self.records[(offset as usize).min(self.records.len())..]
    }

    /// Writes records as [len u32][entry bytes][crc32 u32]; offsets are
    /// implicit in record order and timestamps are not persisted.
    pub fn save(&self, path: &std::path::Path) -> Result<(), DeliveryError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for rec in &self.records {
            let mut entry = Vec::new();
            encode_summary(&rec.summary, &mut entry);
            file.write_all(&(entry.len() as u32).to_le_bytes())?;
            file.write_all(&entry)?;
            file.write_all(&crc32(&entry).to_le_bytes())?;
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, DeliveryError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Reader::new(&bytes);
        let mut log = Self::new();
        while r.remaining() > 0 {
            let len = r.u32()? as usize;
            let entry = r.take(len)?;
            let want_crc = r.u32()?;
            if crc32(entry) != want_crc {
                return Err(DeliveryError::CorruptSnapshot {
                    reason: format!("log record {} failed CRC", log.records.len()),
                });
            }
            let summary = decode_summary(&mut Reader::new(entry))?;
            let offset = log.records.len() as u64;
            log.last_versions.insert(summary.user_id, summary.version);
            log.records.push(ExportRecord { offset, timestamp_micros: 0, summary: Arc::new(summary) });
        }
        Ok(log)
    }
}

/// Applies records [from_offset, end) to the cache in offset order; returns
/// how many were applied. Replay is idempotent: records at or below a user's
/// cached version are no-ops.
pub fn consume(log: &ExportLog, cache: &SummaryCache, from_offset: u64) -> usize {
    let mut applied = 0;
    for rec in log.records_from(from_offset) {
        if cache.apply(Arc::clone(&rec.summary)) {
            applied += 1;
        }
    }
    applied
}
