//! `key=value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored. Keys use the long flag names without the leading dashes.

use std::collections::BTreeMap;

use crate::{Error, Result};

pub fn parse_kv_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, "expected key=value"))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::parse(i + 1, format!("invalid key {key:?}")));
        }
        if out.insert(key.replace('_', "-"), value.trim().to_string()).is_some() {
            return Err(Error::parse(i + 1, format!("duplicate key {key:?}")));
        }
    }
    Ok(out)
}
