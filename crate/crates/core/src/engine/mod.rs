//! Uniform access to the engine under test.
//!
//! An [`Engine`] is one open session. It executes statements under a
//! timeout, classifies every failure into exactly one [`ErrorKind`], and
//! offers the two probes the generator and the statistics need: the runtime
//! type of an expression and a literal-insensitive plan fingerprint.

mod plan;
mod profile;
mod session;
mod sqlite;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use plan::{normalize_plan_text, PlanFingerprint};
pub use profile::{EngineCapabilities, EngineProfile, SQLITE_PROFILE_TOML};
pub use session::{QueryCounters, Session};
pub use sqlite::{SqliteLibrary, SqliteSession};

use crate::error::DriverError;
use crate::value::{SqlType, SqlValue};

/// Default per-statement timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Extra time granted on top of the timeout before a statement counts as
/// overdue for the ceiling check.
pub const TIMEOUT_GRACE: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    /// A semantic rejection listed in the profile's allowlist.
    Expected,
    /// Any other engine error; reportable.
    Internal,
    /// The engine session died.
    Crash,
    /// The statement did not finish within its timeout.
    Hang,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Expected => "expected-error",
            Self::Internal => "internal-error",
            Self::Crash => "crash",
            Self::Hang => "hang",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionError {
    pub kind: ErrorKind,
    pub message: String,
}

impl ExecutionError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn is_expected(&self) -> bool {
        self.kind == ErrorKind::Expected
    }
}

impl fmt::Display for ExecutionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for ExecutionError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub declared_type: Option<String>,
}

/// Rows produced by one statement.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QueryResult {
    pub columns: Vec<ColumnInfo>,
    pub rows: Vec<Vec<SqlValue>>,
    /// Set by the caller when the statement had a top-level ORDER BY whose
    /// key is total; otherwise rows compare as a multiset.
    pub ordered: bool,
}

impl QueryResult {
    pub fn single_value(&self) -> Option<&SqlValue> {
        self.rows.first().and_then(|r| r.first())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_ordered(mut self, ordered: bool) -> Self {
        self.ordered = ordered;
        self
    }
}

/// One open session on the engine under test.
pub trait Engine: Send {
    fn profile(&self) -> &EngineProfile;

    /// Engine release string as reported by the engine itself.
    fn version(&self) -> String;

    fn execute(&mut self, sql: &str, timeout: Duration) -> Result<QueryResult, ExecutionError>;

    /// Drops the current session and opens a fresh, empty one.
    fn reopen(&mut self) -> Result<(), DriverError>;

    /// Runtime type of `expr` evaluated over `context_tables`. When the
    /// expression yields several types across rows, their common supertype
    /// is reported; an expression that is NULL everywhere reports `Null`.
    fn probe_type(
        &mut self,
        expr: &str,
        context_tables: &[String],
        timeout: Duration,
    ) -> Result<SqlType, ExecutionError> {
        let probe = self
            .profile()
            .capabilities
            .type_probe_function
            .clone()
            .ok_or_else(|| ExecutionError::new(ErrorKind::Expected, "engine has no type probe"))?;
        let sql = if context_tables.is_empty() {
            format!("SELECT DISTINCT {probe}({expr})")
        } else {
            format!("SELECT DISTINCT {probe}({expr}) FROM {}", context_tables.join(", "))
        };
        let result = self.execute(&sql, timeout)?;
        let mut ty = SqlType::Null;
        for row in &result.rows {
            let token = match row.first() {
                Some(SqlValue::Text(t)) => t.clone(),
                other => {
                    return Err(ExecutionError::new(
                        ErrorKind::Internal,
                        format!("type probe returned {other:?}"),
                    ))
                }
            };
            let parsed = SqlType::parse(&token).ok_or_else(|| {
                ExecutionError::new(ErrorKind::Internal, format!("unknown type token {token}"))
            })?;
            ty = ty.common_supertype(parsed);
        }
        Ok(ty)
    }

    fn explain_plan(&mut self, query: &str, timeout: Duration) -> Result<PlanFingerprint, ExecutionError> {
        let prefix = self.profile().capabilities.plan_explain_prefix.clone();
        let result = self.execute(&format!("{prefix} {query}"), timeout)?;
        Ok(PlanFingerprint::from_result(&result))
    }
}

/// How to open sessions: which profile, and which engine build.
#[derive(Clone)]
pub struct EngineSpec {
    pub profile: EngineProfile,
    pub library: EngineLibrary,
}

#[derive(Clone)]
pub enum EngineLibrary {
    /// The release linked into this binary.
    Bundled,
    /// A shared library loaded at runtime.
    Dynamic(Arc<SqliteLibrary>),
}

impl EngineSpec {
    pub fn bundled_sqlite() -> Self {
        Self { profile: EngineProfile::sqlite(), library: EngineLibrary::Bundled }
    }

    pub fn sqlite_from_path(profile: EngineProfile, path: impl Into<PathBuf>) -> Result<Self, DriverError> {
        let lib = SqliteLibrary::load(path.into())?;
        Ok(Self { profile, library: EngineLibrary::Dynamic(Arc::new(lib)) })
    }

    pub fn open(&self) -> Result<Box<dyn Engine>, DriverError> {
        let session = match &self.library {
            EngineLibrary::Bundled => SqliteSession::open_bundled(self.profile.clone())?,
            EngineLibrary::Dynamic(lib) => SqliteSession::open_dynamic(lib.clone(), self.profile.clone())?,
        };
        Ok(Box::new(session))
    }

    pub fn describe(&self) -> String {
        match &self.library {
            EngineLibrary::Bundled => format!("{} (bundled)", self.profile.name),
            EngineLibrary::Dynamic(lib) => format!("{} ({})", self.profile.name, lib.path().display()),
        }
    }
}

impl fmt::Debug for EngineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}
