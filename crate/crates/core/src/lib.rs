//! Constant-folding metamorphic testing for SQL engines.

pub mod ast;
pub mod engine;
pub mod error;
pub mod render;
pub mod value;
pub mod expr_gen;
pub mod schema;
pub mod state_gen;
pub mod oracle;
pub mod harness;
