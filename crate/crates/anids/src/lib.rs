//! File formats, checkpoints and the `anids` command-line driver built on
//! [`anids_core`].

use std::path::{Path, PathBuf};

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod extxyz;
pub mod logfile;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: extxyz::ParseError },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("json: {0}")]
    Json(serde_json::Error),
    #[error(transparent)]
    Core(#[from] anids_core::Error),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}
