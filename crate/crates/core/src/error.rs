use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read engine profile {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed engine profile: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid expected-error pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("invalid engine profile: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("cannot load engine library {path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("cannot open engine session: {0}")]
    Open(String),
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("{0} cannot be expressed for engine profile `{1}`")]
    Unrepresentable(&'static str, String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid campaign configuration: {0}")]
    Config(String),
}
