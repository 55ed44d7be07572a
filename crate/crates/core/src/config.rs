//! Plain-text `key = value` run configuration files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Parse `key = value` lines. `#` starts a comment anywhere on a line;
/// blank lines are skipped; keys must be unique.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("expected 'key = value', got '{body}'")))?;
        let key = k.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') {
            return Err(Error::parse(line, format!("invalid key '{key}'")));
        }
        if out.insert(key.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::parse(line, format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

/// Render in the same format, keys sorted.
pub fn render_config(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
