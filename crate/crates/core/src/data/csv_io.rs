//! CSV ingestion and export.
//!
//! One row per (user, candidate, label) with caret-joined history id lists:
//!
//! ```text
//! label,user_id,item_id,category_id,item_history,category_history
//! 1,42,1007,3,12^88^105,0^2^2
//! ```
//!
//! Consecutive rows sharing (user_id, item_history) merge into one batch so
//! a user's candidates are scored against a single history. Malformed rows
//! are counted and skipped, not fatal.

use super::synthetic::HashedEmbedder;
use super::DataError;
use crate::model::SequenceBatch;
use std::path::Path;

pub const COLUMNS: [&str; 6] =
    ["label", "user_id", "item_id", "category_id", "item_history", "category_history"];

#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub history_sep: char,
    pub embed_dim: usize,
    pub embed_seed: u64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { history_sep: '^', embed_dim: 64, embed_seed: 7 }
    }
}

#[derive(Debug)]
pub struct CsvIngest {
    pub batches: Vec<SequenceBatch>,
    pub skipped: usize,
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<CsvIngest, DataError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != COLUMNS {
        return Err(DataError::SchemaMismatch {
            expected: COLUMNS.join(","),
            found: found.join(","),
        });
    }

    let embedder = HashedEmbedder::new(schema.embed_dim, schema.embed_seed);
    let mut skipped = 0usize;
    let mut batches: Vec<SequenceBatch> = Vec::new();
    // Pending group: rows for one (user, history) pair.
    let mut current: Option<PendingBatch> = None;
    let mut any_rows = false;

    for record in reader.records() {
        let record = record?;
        any_rows = true;
        let parsed = match parse_row(&record, schema.history_sep) {
            Some(p) => p,
            None => {
                skipped += 1;
                continue;
            }
        };
        let same_group = current
            .as_ref()
            .map(|c| c.user_id == parsed.user_id && c.uih_item_ids == parsed.uih_item_ids)
            .unwrap_or(false);
        if same_group {
            let c = current.as_mut().unwrap();
            c.cand_item_ids.push(parsed.item_id);
            c.cand_cat_ids.push(parsed.cat_id);
            c.labels.push(parsed.label);
        } else {
            if let Some(done) = current.take() {
                batches.push(done.finish(&embedder));
            }
            current = Some(PendingBatch {
                user_id: parsed.user_id,
                uih_item_ids: parsed.uih_item_ids,
                uih_cat_ids: parsed.uih_cat_ids,
                cand_item_ids: vec![parsed.item_id],
                cand_cat_ids: vec![parsed.cat_id],
                labels: vec![parsed.label],
            });
        }
    }
    if let Some(done) = current.take() {
        batches.push(done.finish(&embedder));
    }
    if !any_rows {
        return Err(DataError::EmptyFile);
    }
    Ok(CsvIngest { batches, skipped })
}

pub fn write_csv<'a>(
    path: &Path,
    batches: impl IntoIterator<Item = &'a SequenceBatch>,
    schema: &CsvSchema,
) -> Result<usize, DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(COLUMNS)?;
    let sep = schema.history_sep.to_string();
    let mut rows = 0usize;
    for batch in batches {
        let item_hist = join_ids(&batch.uih_item_ids, &sep);
        let cat_hist = join_ids(&batch.uih_cat_ids, &sep);
        for i in 0..batch.candidate_count() {
            writer.write_record([
                batch.labels[i].to_string(),
                batch.user_id.to_string(),
                batch.cand_item_ids[i].to_string(),
                batch.cand_cat_ids[i].to_string(),
                item_hist.clone(),
                cat_hist.clone(),
            ])?;
            rows += 1;
        }
    }
    writer.flush().map_err(DataError::Io)?;
    Ok(rows)
}

struct ParsedRow {
    label: u8,
    user_id: u64,
    item_id: u64,
    cat_id: u64,
    uih_item_ids: Vec<u64>,
    uih_cat_ids: Vec<u64>,
}

fn parse_row(record: &csv::StringRecord, sep: char) -> Option<ParsedRow> {
    if record.len() != COLUMNS.len() {
        return None;
    }
    let label = match record.get(0)?.trim() {
        "0" => 0,
        "1" => 1,
        _ => return None,
    };
    let user_id = record.get(1)?.trim().parse().ok()?;
    let item_id = record.get(2)?.trim().parse().ok()?;
    let cat_id = record.get(3)?.trim().parse().ok()?;
    let uih_item_ids = parse_ids(record.get(4)?, sep)?;
    let uih_cat_ids = parse_ids(record.get(5)?, sep)?;
    if uih_item_ids.len() != uih_cat_ids.len() {
        return None;
    }
    Some(ParsedRow { label, user_id, item_id, cat_id, uih_item_ids, uih_cat_ids })
}

fn parse_ids(field: &str, sep: char) -> Option<Vec<u64>> {
    let field = field.trim();
    if field.is_empty() {
        return Some(Vec::new());
    }
    field.split(sep).map(|t| t.trim().parse().ok()).collect()
}

fn join_ids(ids: &[u64], sep: &str) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(sep)
}

struct PendingBatch {
    user_id: u64,
    uih_item_ids: Vec<u64>,
    uih_cat_ids: Vec<u64>,
    cand_item_ids: Vec<u64>,
    cand_cat_ids: Vec<u64>,
    labels: Vec<u8>,
}

impl PendingBatch {
    fn finish(self, embedder: &HashedEmbedder) -> SequenceBatch {
        let uih = embedder.embed(&self.uih_item_ids, &self.uih_cat_ids);
        let candidates = embedder.embed(&self.cand_item_ids, &self.cand_cat_ids);
        SequenceBatch {
            user_id: self.user_id,
            uih_item_ids: self.uih_item_ids,
            uih_cat_ids: self.uih_cat_ids,
            cand_item_ids: self.cand_item_ids,
            cand_cat_ids: self.cand_cat_ids,
            labels: self.labels,
            uih,
            candidates,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{SynthConfig, SyntheticWorld};

    fn write_lines(path: &Path, lines: &[&str]) {
        std::fs::write(path, lines.join("\n")).unwrap();
    }

    #[test]
    fn single_valid_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.csv");
        write_lines(
            &p,
            &["label,user_id,item_id,category_id,item_history,category_history", "1,5,10,2,1^2^3,0^0^1"],
        );
        let got = ingest_csv(&p, &CsvSchema::default()).unwrap();
        assert_eq!(got.batches.len(), 1);
        assert_eq!(got.skipped, 0);
        let b = &got.batches[0];
        assert_eq!(b.user_id, 5);
        assert_eq!(b.uih_item_ids, vec![1, 2, 3]);
        assert_eq!(b.labels, vec![1]);
        assert_eq!(b.uih.rows(), 3);
    }

    #[test]
    fn non_numeric_label_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        write_lines(
            &p,
            &[
                "label,user_id,item_id,category_id,item_history,category_history",
                "yes,5,10,2,1^2,0^0",
                "0,5,11,2,1^2,0^0",
            ],
        );
        let got = ingest_csv(&p, &CsvSchema::default()).unwrap();
        assert_eq!(got.skipped, 1);
        assert_eq!(got.batches.len(), 1);
    }

    #[test]
    fn wrong_header_is_schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hdr.csv");
        write_lines(&p, &["label,user,item,cat,hist,cats", "1,2,3,4,5,6"]);
        assert!(matches!(
            ingest_csv(&p, &CsvSchema::default()),
            Err(DataError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        write_lines(&p, &["label,user_id,item_id,category_id,item_history,category_history"]);
        assert!(matches!(ingest_csv(&p, &CsvSchema::default()), Err(DataError::EmptyFile)));
    }

    #[test]
    fn candidates_group_by_user_and_history() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("group.csv");
        write_lines(
            &p,
            &[
                "label,user_id,item_id,category_id,item_history,category_history",
                "1,5,10,2,1^2,0^0",
                "0,5,11,3,1^2,0^0",
                "1,6,12,1,9,4",
            ],
        );
        let got = ingest_csv(&p, &CsvSchema::default()).unwrap();
        assert_eq!(got.batches.len(), 2);
        assert_eq!(got.batches[0].candidate_count(), 2);
        assert_eq!(got.batches[1].candidate_count(), 1);
    }

    #[test]
    fn generate_write_ingest_roundtrips_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("round.csv");
        let cfg = SynthConfig { users: 6, items: 300, min_history: 3, max_history: 10, ..Default::default() };
        let world = SyntheticWorld::new(cfg).unwrap();
        let batches: Vec<_> = world.stream(0, 6).collect();
        let schema = CsvSchema::default();
        write_csv(&p, &batches, &schema).unwrap();
        let got = ingest_csv(&p, &schema).unwrap();
        assert_eq!(got.skipped, 0);
        assert_eq!(got.batches.len(), batches.len());
        for (a, b) in got.batches.iter().zip(&batches) {
            assert_eq!(a.user_id, b.user_id);
            assert_eq!(a.uih_item_ids, b.uih_item_ids);
            assert_eq!(a.uih_cat_ids, b.uih_cat_ids);
            assert_eq!(a.cand_item_ids, b.cand_item_ids);
            assert_eq!(a.cand_cat_ids, b.cand_cat_ids);
            assert_eq!(a.labels, b.labels);
        }
    }
}
