//! Deterministic content hashing for cache keys, artifact provenance, and
//! seed derivation.
//!
//! Two independent FNV-1a streams give a 128-bit digest; this is a content
//! fingerprint, not a cryptographic hash.

const FNV_OFFSET_A: u64 = 0xcbf29ce484222325;
const FNV_OFFSET_B: u64 = 0x6c62272e07bb0142;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(offset: u64, bytes: &[u8]) -> u64 {
    let mut h = offset;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// 32-hex-char fingerprint of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    format!(
        "{:016x}{:016x}",
        fnv1a(FNV_OFFSET_A, bytes),
        fnv1a(FNV_OFFSET_B, bytes)
    )
}

/// Fingerprint of any serializable value via its canonical JSON encoding.
///
/// `serde_json` maps are B-tree backed, so object keys serialize sorted and
/// the digest is independent of key order in the source document.
pub fn hash_value<T: serde::Serialize>(value: &T) -> String {
    let canonical = serde_json::to_string(&serde_json::to_value(value).expect("serializable"))
        .expect("canonical json");
    content_hash(canonical.as_bytes())
}

/// Derives an independent RNG stream id from a master seed and task labels.
pub fn stream_seed(master: u64, labels: &[u64]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET_A, &master.to_le_bytes());
    for &l in labels {
        h = fnv1a(h, &l.to_le_bytes());
    }
    // splitmix64 finalizer to spread low-entropy label patterns
    let mut z = h.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
