//! On-disk spectrum cache.
//!
//! Entries are keyed by content fingerprints of everything a spectrum depends
//! on; each entry is a `index,mu,lambda` CSV plus a JSON sidecar carrying the
//! metadata and the CSV checksum. A checksum mismatch (truncation, manual
//! edits) invalidates the entry so it gets recomputed.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::hash::content_hash;
use crate::spectral::{SpectrumMeta, SpectrumRecord};

#[derive(Clone, Debug)]
pub struct SpectrumCache {
    root: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    meta: SpectrumMeta,
    csv_hash: String,
}

impl SpectrumCache {
    pub fn open(root: PathBuf) -> std::io::Result<SpectrumCache> {
        std::fs::create_dir_all(&root)?;
        Ok(SpectrumCache { root })
    }

    pub fn root(&self) -> &PathBuf {
        &self.root
    }

    /// Fingerprint of anything serializable, used as the entry key.
    pub fn key<T: Serialize>(parts: &T) -> String {
        crate::hash::hash_value(parts)
    }

    fn csv_path(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.csv"))
    }

    fn sidecar_path(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.json"))
    }

    /// Loads a record, verifying the sidecar checksum; any inconsistency
    /// returns `None` so callers recompute.
    pub fn load(&self, key: &str) -> Option<SpectrumRecord> {
        let sidecar: Sidecar =
            serde_json::from_str(&std::fs::read_to_string(self.sidecar_path(key)).ok()?).ok()?;
        let csv = std::fs::read_to_string(self.csv_path(key)).ok()?;
        if content_hash(csv.as_bytes()) != sidecar.csv_hash {
            return None;
        }
        let mut mu = Vec::new();
        let mut lambda = Vec::new();
        for line in csv.lines().skip(1) {
            let mut fields = line.split(',');
            let _idx = fields.next()?;
            mu.push(fields.next()?.parse().ok()?);
            lambda.push(fields.next()?.parse().ok()?);
        }
        Some(SpectrumRecord {
            mu,
            lambda: Some(lambda),
            meta: sidecar.meta,
        })
    }

    pub fn store(&self, key: &str, record: &SpectrumRecord) -> std::io::Result<String> {
        let csv = record.csv();
        let sidecar = Sidecar {
            meta: record.meta.clone(),
            csv_hash: content_hash(csv.as_bytes()),
        };
        std::fs::write(self.csv_path(key), &csv)?;
        std::fs::write(
            self.sidecar_path(key),
            serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )?;
        Ok(csv)
    }
}
