//! File formats, benchmark sweeps and the command-line front end for `ppr-core`.

pub mod bench;
pub mod cli;
pub mod manifest;
pub mod model_io;
pub mod reference;
pub mod trajectory_io;
pub mod value_io;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] ppr_core::Error),
}
