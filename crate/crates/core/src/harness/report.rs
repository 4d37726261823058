//! Bug reports: bucketing, replay, and the on-disk format.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{ErrorKind, ExecutionError, QueryResult, Session};
use crate::error::HarnessError;
use crate::oracle::{execute_case, OracleConfig, OracleVerdict, Outcome, QueryTriple, TestCase};

/// What makes two reports "the same bug" for deduplication.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BucketKey {
    pub outcome: String,
    pub site: String,
    /// Sorted node kinds of the expression under test.
    pub node_kinds: Vec<String>,
    pub error_signature: Option<String>,
}

impl BucketKey {
    pub fn of(verdict: &OracleVerdict) -> Self {
        let (site, node_kinds) = match &verdict.case {
            Some(case) => (case.site(), case.node_kinds().into_iter().map(str::to_owned).collect()),
            None => (String::new(), vec![]),
        };
        let error_signature = match verdict.outcome {
            Outcome::EngineError(_) => Some(error_signature(verdict.error.as_deref().unwrap_or(&verdict.reason))),
            _ => None,
        };
        Self { outcome: verdict.outcome.name(), site, node_kinds, error_signature }
    }

    /// Short stable hash, used as the bucket directory name.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("bucket key serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}

/// An engine message with literals and names blanked out, so that the same
/// failure on different data lands in one bucket.
pub fn error_signature(message: &str) -> String {
    static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"'[^']*'|"[^"]*"|`[^`]*`"#).unwrap());
    static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d+(\.\d+)?\b").unwrap());
    static NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[a-z]{1,2}\d+\b").unwrap());
    let s = message.to_ascii_lowercase();
    let s = QUOTED.replace_all(&s, "?");
    let s = NAME.replace_all(&s, "?");
    let s = NUMBER.replace_all(&s, "N");
    s.trim().to_owned()
}

/// Result of [`Deduplicator::dedup`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dedup {
    New(String),
    Duplicate(String),
}

/// Remembers buckets seen so far in a campaign.
#[derive(Debug, Default)]
pub struct Deduplicator {
    seen: HashMap<String, u64>,
}

impl Deduplicator {
    pub fn dedup(&mut self, key: &BucketKey) -> Dedup {
        let id = key.id();
        let count = self.seen.entry(id.clone()).or_default();
        *count += 1;
        if *count == 1 {
            Dedup::New(id)
        } else {
            Dedup::Duplicate(id)
        }
    }

    /// Occurrences per bucket.
    pub fn counts(&self) -> &HashMap<String, u64> {
        &self.seen
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub key: BucketKey,
    pub engine: String,
    pub engine_version: String,
    /// Statements that build the database state.
    pub creation_script: Vec<String>,
    /// Tables whose row counts a relation test must leave unchanged.
    pub tables: Vec<String>,
    pub case: TestCase,
    pub outcome: Outcome,
    pub reason: String,
    pub error: Option<String>,
    pub triple: QueryTriple,
    pub reduced: bool,
    pub state_seed: u64,
    pub worker: usize,
}

impl BugReport {
    pub fn new(
        verdict: &OracleVerdict,
        session: &Session,
        creation_script: Vec<String>,
        tables: Vec<String>,
        state_seed: u64,
        worker: usize,
    ) -> Option<Self> {
        let key = BucketKey::of(verdict);
        Some(Self {
            id: key.id(),
            key,
            engine: session.spec().describe(),
            engine_version: session.version(),
            creation_script,
            tables,
            case: verdict.case.clone()?,
            outcome: verdict.outcome,
            reason: verdict.reason.clone(),
            error: verdict.error.clone(),
            triple: verdict.triple.clone(),
            reduced: false,
            state_seed,
            worker,
        })
    }

    /// Whether `verdict` shows the same failure as this report.
    pub fn matches(&self, verdict: &OracleVerdict) -> bool {
        if verdict.outcome != self.outcome {
            return false;
        }
        match self.outcome {
            Outcome::EngineError(_) => {
                let sig = |e: &Option<String>, r: &str| error_signature(e.as_deref().unwrap_or(r));
                sig(&verdict.error, &verdict.reason) == sig(&self.error, &self.reason)
            }
            _ => true,
        }
    }

    pub fn repro_sql(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "-- bucket {}", self.id);
        let _ = writeln!(out, "-- engine: {} {}", self.engine, self.engine_version);
        let _ = writeln!(out, "-- outcome: {} at {}", self.outcome.name(), self.key.site);
        for line in self.reason.lines() {
            let _ = writeln!(out, "--   {line}");
        }
        let _ = writeln!(out, "-- reduced: {}", if self.reduced { "yes" } else { "no" });
        out.push('\n');
        for s in &self.creation_script {
            let _ = writeln!(out, "{s};");
        }
        let t = &self.triple;
        let _ = writeln!(out, "\n-- auxiliary query");
        let _ = writeln!(out, "{};", t.auxiliary);
        if let Some(r) = &t.aux_result {
            write_result(&mut out, r);
        }
        for (label, statements, results) in
            [("original", &t.original, &t.original_result), ("folded", &t.folded, &t.folded_result)]
        {
            let _ = writeln!(out, "\n-- {label}");
            for s in statements {
                let _ = writeln!(out, "{s};");
            }
            for r in results.iter().flatten() {
                write_result(&mut out, r);
            }
        }
        out
    }

    /// Writes `repro.sql` and `report.json` under `<out>/reports/<id>/`.
    pub fn persist(&self, out_dir: &Path) -> Result<PathBuf, HarnessError> {
        let dir = out_dir.join("reports").join(&self.id);
        let io = |path: &Path, source| HarnessError::Io { path: path.to_owned(), source };
        std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let sql = dir.join("repro.sql");
        std::fs::write(&sql, self.repro_sql()).map_err(|e| io(&sql, e))?;
        let json = dir.join("report.json");
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&json, text).map_err(|e| io(&json, e))?;
        Ok(dir)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_owned(), source })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

fn write_result(out: &mut String, r: &QueryResult) {
    const SHOWN: usize = 20;
    let _ = writeln!(out, "-- => {} row(s)", r.rows.len());
    for row in r.rows.iter().take(SHOWN) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "--    ({})", cells.join(", "));
    }
    if r.rows.len() > SHOWN {
        let _ = writeln!(out, "--    ...");
    }
}

/// Rebuilds the state from `script` on a fresh database and runs `case`.
/// Relation tests additionally check that `tables` keep their row counts.
/// Fails only when the script itself does not apply.
pub fn replay(
    script: &[String],
    tables: &[String],
    case: &TestCase,
    session: &mut Session,
    config: &OracleConfig,
) -> Result<OracleVerdict, ExecutionError> {
    session.reset().map_err(|e| ExecutionError::new(ErrorKind::Crash, e.to_string()))?;
    for s in script {
        session.run_setup(s)?;
    }
    let relation = matches!(case, TestCase::Relation { .. });
    let before = if relation { row_counts(tables, session) } else { BTreeMap::new() };
    let mut verdict = execute_case(case, session, config);
    if relation {
        let after = row_counts(tables, session);
        if before != after && verdict.outcome.is_test() {
            verdict.outcome = Outcome::EngineError(ErrorKind::Internal);
            verdict.reason = "state not restored after relation test".into();
            verdict.error = Some(verdict.reason.clone());
        }
    }
    Ok(verdict)
}

fn row_counts(tables: &[String], session: &mut Session) -> BTreeMap<String, Option<i64>> {
    tables
        .iter()
        .map(|t| {
            let n = session
                .execute_uncounted(&format!("SELECT count(*) FROM \"{t}\""))
                .ok()
                .and_then(|r| match r.single_value() {
                    Some(crate::value::SqlValue::Integer(n)) => Some(*n),
                    _ => None,
                });
            (t.clone(), n)
        })
        .collect()
}
