//! Declarative engine profiles: capability flags, dialect tokens, the
//! function allowlist and the expected-error patterns.

use std::path::Path;

use regex::RegexSet;
use serde::{Deserialize, Serialize};

use crate::error::ProfileError;

/// The built-in SQLite profile, also shipped as `profiles/sqlite.toml`.
pub const SQLITE_PROFILE_TOML: &str = include_str!("../../profiles/sqlite.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineCapabilities {
    /// Binary operators reject mismatched operand types.
    pub strict_binary_typing: bool,
    pub supports_any_all: bool,
    /// Operator spelling for null-safe equality (`IS` in SQLite,
    /// `IS NOT DISTINCT FROM` in PostgreSQL-like dialects).
    pub null_safe_equality: String,
    /// Predicates must be boolean-typed; no implicit coercion from numbers.
    pub requires_boolean_predicates: bool,
    pub plan_explain_prefix: String,
    /// Function returning a value's runtime type, used by `probe_type`.
    #[serde(default)]
    pub type_probe_function: Option<String>,
    /// `x IN ()` is accepted.
    #[serde(default)]
    pub supports_empty_in_list: bool,
    /// Value lists on the right of IN/ANY/ALL must be spelled as a chain of
    /// `SELECT v UNION SELECT ...`.
    #[serde(default)]
    pub value_list_as_union: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileFile {
    name: String,
    capabilities: EngineCapabilities,
    #[serde(default)]
    functions: FunctionSection,
    #[serde(default)]
    errors: ErrorSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct FunctionSection {
    #[serde(default)]
    allow: Vec<String>,
    #[serde(default)]
    deny: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ErrorSection {
    #[serde(default)]
    expected: Vec<String>,
}

/// A validated engine profile.
#[derive(Debug, Clone)]
pub struct EngineProfile {
    pub name: String,
    pub capabilities: EngineCapabilities,
    pub function_allowlist: Vec<String>,
    pub function_denylist: Vec<String>,
    expected_patterns: Vec<String>,
    expected: RegexSet,
}

impl EngineProfile {
    pub fn sqlite() -> Self {
        Self::from_toml(SQLITE_PROFILE_TOML).expect("built-in sqlite profile is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ProfileError> {
        let file: ProfileFile = toml::from_str(text)?;
        let caps = &file.capabilities;
        if caps.null_safe_equality.trim().is_empty() {
            return Err(ProfileError::Invalid(
                "null_safe_equality must name exactly one operator token".into(),
            ));
        }
        if caps.strict_binary_typing && caps.type_probe_function.is_none() {
            return Err(ProfileError::Invalid(
                "strictly typed engines need a type_probe_function".into(),
            ));
        }
        if caps.plan_explain_prefix.trim().is_empty() {
            return Err(ProfileError::Invalid("plan_explain_prefix is empty".into()));
        }
        let expected = RegexSet::new(
            file.errors
                .expected
                .iter()
                .map(|p| format!("(?i){p}")),
        )?;
        let deny: Vec<String> = file.functions.deny.iter().map(|f| f.to_ascii_lowercase()).collect();
        let allow = file
            .functions
            .allow
            .iter()
            .map(|f| f.to_ascii_lowercase())
            .filter(|f| !deny.contains(f))
            .collect();
        Ok(Self {
            name: file.name,
            capabilities: file.capabilities,
            function_allowlist: allow,
            function_denylist: deny,
            expected_patterns: file.errors.expected,
            expected,
        })
    }

    pub fn is_expected_error(&self, message: &str) -> bool {
        self.expected.is_match(message)
    }

    pub fn expected_patterns(&self) -> &[String] {
        &self.expected_patterns
    }

    pub fn allows_function(&self, name: &str) -> bool {
        let name = name.to_ascii_lowercase();
        !self.function_denylist.contains(&name) && self.function_allowlist.contains(&name)
    }
}
