//! Config hashing and the provenance record stamped on every artifact.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const CODE_VERSION: &str = concat!("soilmap-core/", env!("CARGO_PKG_VERSION"));

pub const KEY_HASH: &str = "provenance.config_hash";
pub const KEY_SEED: &str = "provenance.seed";
pub const KEY_VERSION: &str = "provenance.version";

/// SHA-256 of the canonical JSON form (object keys sorted) of `config`.
pub fn config_hash<T: Serialize + ?Sized>(config: &T) -> Result<String> {
    // `Value` objects are BTreeMap-backed, so serialization sorts keys
    let canonical = serde_json::to_string(&serde_json::to_value(config)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Provenance {
            config_hash: config_hash.into(),
            seed,
            version: CODE_VERSION.into(),
        }
    }

    pub fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            (KEY_HASH.to_string(), self.config_hash.clone()),
            (KEY_SEED.to_string(), self.seed.to_string()),
            (KEY_VERSION.to_string(), self.version.clone()),
        ])
    }

    /// `key=value` lines for comment headers of text artifacts.
    pub fn lines(&self) -> Vec<String> {
        self.meta().into_iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    /// Single-line form for artifacts with one free-text field.
    pub fn line(&self) -> String {
        self.lines().join(" ")
    }

    /// Reads a record back from metadata or `key=value` text; `None` when
    /// the hash is absent.
    pub fn from_meta(meta: &BTreeMap<String, String>) -> Option<Self> {
        Some(Provenance {
            config_hash: meta.get(KEY_HASH)?.clone(),
            seed: meta.get(KEY_SEED).and_then(|s| s.parse().ok()).unwrap_or(0),
            version: meta.get(KEY_VERSION).cloned().unwrap_or_default(),
        })
    }

    pub fn from_text(text: &str) -> Option<Self> {
        let meta: BTreeMap<String, String> = text
            .split_whitespace()
            .filter_map(|t| t.trim_start_matches('#').split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self::from_meta(&meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct A {
        b: u32,
        a: f64,
    }

    #[derive(Serialize)]
    struct B {
        a: f64,
        b: u32,
    }

    #[test]
    fn hash_ignores_field_order_and_tracks_values() {
        let h = config_hash(&A { b: 1, a: 0.5 }).unwrap();
        assert_eq!(h, config_hash(&B { a: 0.5, b: 1 }).unwrap());
        assert_ne!(h, config_hash(&B { a: 0.5, b: 2 }).unwrap());
        assert_eq!(h.len(), 64);
    }

    #[test]
    fn text_roundtrip() {
        let p = Provenance::new("abc", 7);
        assert_eq!(Provenance::from_text(&p.line()), Some(p.clone()));
        assert_eq!(Provenance::from_meta(&p.meta()), Some(p));
    }
}
