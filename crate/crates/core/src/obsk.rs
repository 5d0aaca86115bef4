//! Observation snapshot store.
//!
//! Every observation a tool produces is stored in full under a content-derived
//! 10-digit key. The controller only sees the head of the text followed by the
//! key, and can hand the key back as a tool argument to have the full text
//! substituted in.
//!
//! Rendered form (bit-exact):
//!
//! ```text
//! <first head_lines lines>
//! ...<N> lines omitted.
//! [ snapshot: 2975241420 ]
//! ```
//!
//! The omission line is left out when nothing was cut.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const DEFAULT_HEAD_LINES: usize = 7;
pub const KEY_WIDTH: usize = 10;
/// Stored in place of an observation that has no content left after deduplication.
pub const EMPTY_OBSERVATION: &str = "(empty observation)";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ObskError {
    #[error("cannot store an empty observation")]
    EmptyObservation,
    #[error("unknown snapshot key {0}")]
    UnknownKey(String),
    #[error("snapshot key space exhausted")]
    KeySpaceExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnapshotKey(String);

impl SnapshotKey {
    fn from_hash(h: u32) -> Self {
        Self(format!("{h:0width$}", width = KEY_WIDTH))
    }

    /// Accepts exactly ten ASCII digits.
    pub fn parse(s: &str) -> Option<Self> {
        looks_like_key(s).then(|| Self(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SnapshotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn looks_like_key(s: &str) -> bool {
    s.len() == KEY_WIDTH && s.bytes().all(|b| b.is_ascii_digit())
}

/// 32-bit FNV-1a over the UTF-8 bytes.
pub fn content_hash(text: &str) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in text.as_bytes() {
        h ^= u32::from(*b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub full_text: String,
    pub head_line_count: usize,
    pub origin_tool: String,
}

/// Per-trajectory key-value store. A store may sit on top of a frozen parent
/// (see [`SnapshotStore::overlay`]); reads fall through to the parent, writes
/// stay local.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    parent: Option<Arc<SnapshotStore>>,
    records: HashMap<SnapshotKey, ObservationRecord>,
    head_lines: usize,
}

impl Default for SnapshotStore {
    fn default() -> Self {
        Self::new(DEFAULT_HEAD_LINES)
    }
}

impl SnapshotStore {
    pub fn new(head_lines: usize) -> Self {
        Self {
            parent: None,
            records: HashMap::new(),
            head_lines: head_lines.max(1),
        }
    }

    pub fn overlay(parent: Arc<SnapshotStore>) -> Self {
        let head_lines = parent.head_lines;
        Self {
            parent: Some(parent),
            records: HashMap::new(),
            head_lines,
        }
    }

    pub fn head_lines(&self) -> usize {
        self.head_lines
    }

    pub fn len(&self) -> usize {
        self.records.len() + self.parent.as_ref().map_or(0, |p| p.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record(&self, key: &SnapshotKey) -> Option<&ObservationRecord> {
        self.records
            .get(key)
            .or_else(|| self.parent.as_ref().and_then(|p| p.record(key)))
    }

    pub fn contains(&self, key: &SnapshotKey) -> bool {
        self.record(key).is_some()
    }

    /// Stores `full_text` and returns its key. Identical content always maps
    /// to the same key; a hash collision with different content probes the
    /// next key instead of overwriting.
    pub fn put(&mut self, full_text: &str, origin_tool: &str) -> Result<SnapshotKey, ObskError> {
        if full_text.is_empty() {
            return Err(ObskError::EmptyObservation);
        }
        let mut h = content_hash(full_text);
        for _ in 0..=u32::MAX {
            let key = SnapshotKey::from_hash(h);
            match self.record(&key) {
                Some(rec) if rec.full_text == full_text => return Ok(key),
                Some(_) => h = h.wrapping_add(1),
                None => {
                    self.records.insert(
                        key.clone(),
                        ObservationRecord {
                            full_text: full_text.to_string(),
                            head_line_count: self.head_lines,
                            origin_tool: origin_tool.to_string(),
                        },
                    );
                    return Ok(key);
                }
            }
        }
        Err(ObskError::KeySpaceExhausted)
    }

    pub fn get(&self, key: &SnapshotKey) -> Result<&str, ObskError> {
        self.record(key)
            .map(|r| r.full_text.as_str())
            .ok_or_else(|| ObskError::UnknownKey(key.to_string()))
    }

    pub fn get_str(&self, key: &str) -> Result<&str, ObskError> {
        let key = SnapshotKey::parse(key).ok_or_else(|| ObskError::UnknownKey(key.to_string()))?;
        self.get(&key)
    }

    /// Stores and renders in one go.
    pub fn put_and_render(
        &mut self,
        full_text: &str,
        origin_tool: &str,
    ) -> Result<(SnapshotKey, String), ObskError> {
        let key = self.put(full_text, origin_tool)?;
        let record = self.record(&key).expect("record was just stored");
        let rendered = render_head(record, &key, record.head_line_count);
        Ok((key, rendered))
    }

    /// Replaces every string (or integer) argument equal to an issued key with
    /// the stored text. A 10-digit string that was never issued is an error.
    pub fn resolve_snapshot_args(
        &self,
        args: &Map<String, Value>,
    ) -> Result<Map<String, Value>, ObskError> {
        args.iter()
            .map(|(k, v)| Ok((k.clone(), self.resolve_value(v)?)))
            .collect()
    }

    fn resolve_value(&self, value: &Value) -> Result<Value, ObskError> {
        Ok(match value {
            Value::String(s) if looks_like_key(s.trim()) => {
                Value::String(self.get_str(s.trim())?.to_string())
            }
            Value::Number(n) => match n.as_u64().filter(|&x| x <= u64::from(u32::MAX)) {
                Some(x) => {
                    let key = SnapshotKey::from_hash(x as u32);
                    match self.get(&key) {
                        Ok(text) => Value::String(text.to_string()),
                        Err(_) => value.clone(),
                    }
                }
                None => value.clone(),
            },
            Value::Array(items) => Value::Array(
                items
                    .iter()
                    .map(|v| self.resolve_value(v))
                    .collect::<Result<_, _>>()?,
            ),
            Value::Object(map) => Value::Object(self.resolve_snapshot_args(map)?),
            other => other.clone(),
        })
    }
}

pub fn snapshot_line(key: &SnapshotKey) -> String {
    format!("[ snapshot: {key} ]")
}

pub fn omission_line(omitted: usize) -> String {
    format!("...{omitted} lines omitted.")
}

/// Head-truncated view of a stored observation.
pub fn render_head(record: &ObservationRecord, key: &SnapshotKey, head_lines: usize) -> String {
    let head_lines = head_lines.max(1);
    let lines: Vec<&str> = record.full_text.lines().collect();
    let mut out = String::new();
    if lines.is_empty() || record.full_text.trim().is_empty() {
        out.push_str(EMPTY_OBSERVATION);
        out.push('\n');
    } else {
        for line in lines.iter().take(head_lines) {
            out.push_str(line);
            out.push('\n');
        }
        if lines.len() > head_lines {
            out.push_str(&omission_line(lines.len() - head_lines));
            out.push('\n');
        }
    }
    out.push_str(&snapshot_line(key));
    out
}

/// Finds the key on the last snapshot line of a rendered observation.
pub fn parse_snapshot_line(rendered: &str) -> Option<SnapshotKey> {
    rendered.lines().rev().find_map(|line| {
        line.trim()
            .strip_prefix("[ snapshot: ")
            .and_then(|rest| rest.strip_suffix(" ]"))
            .and_then(SnapshotKey::parse)
    })
}
