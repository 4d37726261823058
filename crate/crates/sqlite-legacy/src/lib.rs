//! A historical SQLite release compiled into a shared library.
//!
//! The library is built from the vendored amalgamation at build time and is
//! meant to be opened through the dynamic-loading driver in `coddtest`, so
//! that it can coexist with the statically linked current release.

use std::path::Path;

/// Release string of the vendored amalgamation.
pub const VERSION: &str = env!("CODDTEST_LEGACY_SQLITE_VERSION");

/// Absolute path of the compiled shared library.
pub fn library_path() -> &'static Path {
    Path::new(env!("CODDTEST_LEGACY_SQLITE_PATH"))
}
