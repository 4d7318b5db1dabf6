//! Snapshot file format: magic "VSCH", format version u32, entry count u64,
//! then per entry the shared summary encoding, with a trailing CRC32 of all
//! preceding bytes. Little-endian throughout.

use super::cache::SummaryCache;
use super::codec::{crc32, decode_summary, encode_summary, Reader};
use super::DeliveryError;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

const MAGIC: &[u8; 4] = b"VSCH";
const FORMAT_VERSION: u32 = 1;

pub fn snapshot_save(cache: &SummaryCache, path: &Path) -> Result<(), DeliveryError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    // all_entries is ordered (user ascending, version descending) so the
    // snapshot bytes are a pure function of cache state.
    let entries = cache.all_entries();
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for e in &entries {
        encode_summary(e, &mut buf);
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn snapshot_load(path: &Path) -> Result<SummaryCache, DeliveryError> {
    snapshot_load_with_depth(path, 2)
}

pub fn snapshot_load_with_depth(path: &Path, history_depth: usize) -> Result<SummaryCache, DeliveryError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 4 + 8 + 4 {
        return Err(DeliveryError::CorruptSnapshot { reason: "file too short".into() });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let want_crc = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32(body) != want_crc {
        return Err(DeliveryError::CorruptSnapshot { reason: "checksum mismatch".into() });
    }
    let mut r = Reader::new(body);
    if r.take(4)? != MAGIC {
        return Err(DeliveryError::CorruptSnapshot { reason: "bad magic".into() });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(DeliveryError::CorruptSnapshot {
            reason: format!("unsupported format version {version}"),
        });
    }
    let count = r.u64()?;
    let cache = SummaryCache::new(history_depth);
    let mut pending = Vec::with_capacity(count as usize);
    for _ in 0..count {
        pending.push(decode_summary(&mut r)?);
    }
    if r.remaining() != 0 {
        return Err(DeliveryError::CorruptSnapshot {
            reason: format!("{} trailing bytes", r.remaining()),
        });
    }
    // Entries were written newest-first per user; apply oldest-first so the
    // version-monotonic insert accepts them all.
    pending.sort_by_key(|s| (s.user_id, s.version));
    for s in pending {
        cache.apply(Arc::new(s));
    }
    Ok(cache)
}
