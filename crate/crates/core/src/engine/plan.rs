use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::QueryResult;
use crate::value::SqlValue;

/// Literal-insensitive identity of a query plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanFingerprint(pub u64);

impl PlanFingerprint {
    /// Builds the fingerprint from raw plan rows. For SQLite-shaped output
    /// (`id`, `parent`, ..., `detail`) the tree nesting is kept as an
    /// indentation depth; otherwise every text column is used verbatim.
    pub fn from_result(result: &QueryResult) -> Self {
        Self::of_text(&canonical_plan_text(result))
    }

    pub fn of_text(text: &str) -> Self {
        let digest = Sha256::digest(text.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        Self(u64::from_be_bytes(bytes))
    }
}

impl fmt::Display for PlanFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

pub fn canonical_plan_text(result: &QueryResult) -> String {
    let position = |name: &str| result.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name));
    let mut lines = Vec::with_capacity(result.rows.len());
    if let (Some(id), Some(parent), Some(detail)) = (position("id"), position("parent"), position("detail")) {
        let mut depth_of: Vec<(i64, usize)> = Vec::new();
        for row in &result.rows {
            let (SqlValue::Integer(node), SqlValue::Integer(up)) = (&row[id], &row[parent]) else {
                continue;
            };
            let depth = depth_of
                .iter()
                .rev()
                .find(|(n, _)| n == up)
                .map(|(_, d)| d + 1)
                .unwrap_or(0);
            depth_of.push((*node, depth));
            let text = match &row[detail] {
                SqlValue::Text(t) => normalize_plan_text(t),
                other => normalize_plan_text(&other.to_string()),
            };
            lines.push(format!("{depth}:{text}"));
        }
    } else {
        for row in &result.rows {
            let parts: Vec<String> = row
                .iter()
                .filter_map(|v| match v {
                    SqlValue::Text(t) => Some(normalize_plan_text(t)),
                    _ => None,
                })
                .collect();
            lines.push(parts.join("|"));
        }
    }
    lines.join("\n")
}

/// Replaces literal numbers and quoted strings by `?` and collapses
/// whitespace. Digits inside identifiers (`t0`, `i1`) have no word
/// boundary before them and are kept.
pub fn normalize_plan_text(text: &str) -> String {
    static QUOTED: OnceLock<Regex> = OnceLock::new();
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    static SPACE: OnceLock<Regex> = OnceLock::new();
    let quoted = QUOTED.get_or_init(|| Regex::new(r"'(?:[^']|'')*'|X'[0-9A-Fa-f]*'").unwrap());
    let number = NUMBER.get_or_init(|| Regex::new(r"\b\d+(?:\.\d+)?(?:[eE][+-]?\d+)?\b").unwrap());
    let space = SPACE.get_or_init(|| Regex::new(r"\s+").unwrap());
    let text = quoted.replace_all(text, "?");
    let text = number.replace_all(&text, "?");
    space.replace_all(text.trim(), " ").into_owned()
}
