use thiserror::Error;

use crate::netmodel::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed case file: {0}")]
    MalformedCase(String),

    #[error("invalid topology: {}", format_diagnostics(.0))]
    InvalidTopology(Vec<Diagnostic>),

    #[error("invalid loading factor {0} (must be finite and > 0)")]
    InvalidAlpha(f64),

    #[error("voltage collapse at bus index {bus}: |V| = {magnitude:e} below floor")]
    VoltageCollapse { bus: usize, magnitude: f64 },

    #[error("singular matrix: no acceptable pivot in column {column}")]
    SingularMatrix { column: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
