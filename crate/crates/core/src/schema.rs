//! Column metadata the generators and the oracle reason about: type
//! affinity and collating sequence, following SQLite's rules.

use serde::{Deserialize, Serialize};

/// Type affinity of a column or expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Affinity {
    /// No affinity: literals and plain expressions.
    None,
    /// Columns declared BLOB or without a type. Unlike `None`, this blocks
    /// TEXT conversion of the other operand in a comparison.
    Blob,
    Integer,
    Text,
    Real,
    Numeric,
    /// Engine-defined (view columns over expressions); treated as
    /// potentially coercing.
    Unknown,
}

impl Affinity {
    /// Affinity of a declared column type, by SQLite's substring rules.
    pub fn of_declared_type(type_name: Option<&str>) -> Self {
        let Some(t) = type_name else { return Affinity::Blob };
        let t = t.to_ascii_uppercase();
        if t.contains("INT") {
            Affinity::Integer
        } else if t.contains("CHAR") || t.contains("CLOB") || t.contains("TEXT") {
            Affinity::Text
        } else if t.contains("BLOB") || t.trim().is_empty() {
            Affinity::Blob
        } else if t.contains("REAL") || t.contains("FLOA") || t.contains("DOUB") {
            Affinity::Real
        } else {
            Affinity::Numeric
        }
    }

    /// Whether comparing against this affinity may coerce the other operand.
    pub fn coerces(self) -> bool {
        !matches!(self, Affinity::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Collation {
    Binary,
    NoCase,
    RTrim,
}

impl Collation {
    pub const ALL: [Collation; 3] = [Collation::Binary, Collation::NoCase, Collation::RTrim];

    pub fn name(self) -> &'static str {
        match self {
            Collation::Binary => "BINARY",
            Collation::NoCase => "NOCASE",
            Collation::RTrim => "RTRIM",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub type_name: Option<String>,
    pub affinity: Affinity,
    pub collation: Collation,
    pub nullable: bool,
    /// Values are pairwise distinct (PRIMARY KEY or UNIQUE).
    pub unique: bool,
}

impl Column {
    pub fn untyped(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            type_name: None,
            affinity: Affinity::Blob,
            collation: Collation::Binary,
            nullable: true,
            unique: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    Table,
    View,
    /// Derived tables, CTEs and scratch tables built by the oracle.
    Derived,
}

/// Anything that can appear in a FROM clause.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub kind: RelationKind,
    pub columns: Vec<Column>,
}

impl Relation {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_type_rules() {
        assert_eq!(Affinity::of_declared_type(Some("INT")), Affinity::Integer);
        assert_eq!(Affinity::of_declared_type(Some("BIGINT")), Affinity::Integer);
        assert_eq!(Affinity::of_declared_type(Some("VARCHAR(10)")), Affinity::Text);
        assert_eq!(Affinity::of_declared_type(Some("BLOB")), Affinity::Blob);
        assert_eq!(Affinity::of_declared_type(None), Affinity::Blob);
        assert_eq!(Affinity::of_declared_type(Some("DOUBLE")), Affinity::Real);
        assert_eq!(Affinity::of_declared_type(Some("NUMERIC")), Affinity::Numeric);
        // "POINT" contains "INT"
        assert_eq!(Affinity::of_declared_type(Some("FLOATING POINT")), Affinity::Integer);
    }
}
