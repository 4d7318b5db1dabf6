//! Binary encoding shared by the snapshot format, the on-disk export log,
//! and the cache state hash. Little-endian throughout.

use super::quant::QuantizedSummary;
use super::DeliveryError;

/// Appends one summary entry: user_id as length-prefixed bytes, version u64,
/// k u32, d u32, per-row (scale f64, zero_point f64), codes as raw i8.
pub fn encode_summary(s: &QuantizedSummary, out: &mut Vec<u8>) {
    let id_bytes = s.user_id.to_le_bytes();
    out.extend_from_slice(&(id_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&id_bytes);
    out.extend_from_slice(&s.version.to_le_bytes());
    out.extend_from_slice(&s.k.to_le_bytes());
    out.extend_from_slice(&s.d.to_le_bytes());
    for (scale, zp) in s.scales.iter().zip(&s.zero_points) {
        out.extend_from_slice(&scale.to_le_bytes());
        out.extend_from_slice(&zp.to_le_bytes());
    }
    out.extend_from_slice(&s.codes.iter().map(|&c| c as u8).collect::<Vec<u8>>());
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DeliveryError> {
        if self.remaining() < n {
            return Err(DeliveryError::CorruptSnapshot {
                reason: format!("truncated: wanted {n} bytes, {} left", self.remaining()),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, DeliveryError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DeliveryError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, DeliveryError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_summary(r: &mut Reader) -> Result<QuantizedSummary, DeliveryError> {
    let id_len = r.u32()? as usize;
    if id_len != 8 {
        return Err(DeliveryError::CorruptSnapshot {
            reason: format!("unexpected user id length {id_len}"),
        });
    }
    let user_id = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let version = r.u64()?;
    let k = r.u32()?;
    let d = r.u32()?;
    let kk = k as usize;
    let dd = d as usize;
    // Guard against absurd sizes from corrupt headers before allocating.
    if kk.saturating_mul(dd) > (1 << 28) {
        return Err(DeliveryError::CorruptSnapshot { reason: format!("entry claims {k}x{d} codes") });
    }
    let mut scales = Vec::with_capacity(kk);
    let mut zero_points = Vec::with_capacity(kk);
    for _ in 0..kk {
        scales.push(r.f64()?);
        zero_points.push(r.f64()?);
    }
    let codes = r.take(kk * dd)?.iter().map(|&b| b as i8).collect();
    Ok(QuantizedSummary { user_id, version, k, d, scales, zero_points, codes })
}

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, e) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 == 1 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *e = c;
        }
        t
    });
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = table[((crc ^ u32::from(b)) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

/// FNV-1a over arbitrary bytes; used for cache state hashes.
pub fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_known_vector() {
        // CRC-32 of "123456789" is the classic check value.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn summary_roundtrips() {
        let s = QuantizedSummary {
            user_id: 42,
            version: 7,
            k: 2,
            d: 3,
            scales: vec![0.5, 0.25],
            zero_points: vec![0.0, -1.0],
            codes: vec![1, -2, 3, -4, 5, -6],
        };
        let mut buf = Vec::new();
        encode_summary(&s, &mut buf);
        let back = decode_summary(&mut Reader::new(&buf)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_entry_errors() {
        let s = QuantizedSummary {
            user_id: 1,
            version: 1,
            k: 1,
            d: 4,
            scales: vec![1.0],
            zero_points: vec![0.0],
            codes: vec![0; 4],
        };
        let mut buf = Vec::new();
        encode_summary(&s, &mut buf);
        buf.truncate(buf.len() - 2);
        assert!(decode_summary(&mut Reader::new(&buf)).is_err());
    }
}
