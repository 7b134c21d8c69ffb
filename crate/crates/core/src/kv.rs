//! Line-oriented `key=value` text, used for asset sidecars and the service config.

use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected key=value")]
    MissingEquals { line: usize },
    #[error("line {line}: empty key")]
    EmptyKey { line: usize },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
}

/// Parses `key=value` lines. Blank lines and lines starting with `#` are skipped;
/// whitespace around keys and values is trimmed.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, KvError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or(KvError::MissingEquals { line })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(KvError::EmptyKey { line });
        }
        if out
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(KvError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
    }
    Ok(out)
}
