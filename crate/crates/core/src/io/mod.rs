//! Matrix file formats, result tables, experiment configuration and the
//! experiment runner.

mod config;
mod matrix_file;
mod runner;

pub use config::{
    ExperimentConfig, ExperimentKind, FinanceConfig, ImagingConfig, Preset, SweConfig, TrainingConfig,
};
pub use matrix_file::{
    decode_binary, encode_binary, read_binary, read_csv, read_matrix, read_returns_csv, write_binary, write_csv,
    write_matrix, write_table, BINARY_MAGIC, KIND_F64_LE,
};
pub use runner::{run_experiment, Manifest, ManifestFile, Stage, OUT_DIR_ENV};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<IoError>,
    },
    #[error("malformed matrix file at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },
    #[error("csv line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("config field `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl IoError {
    pub(crate) fn file(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> IoError {
        let path = path.into();
        move |source| IoError::File { path, source }
    }

    pub(crate) fn config(path: &str, message: impl Into<String>) -> IoError {
        IoError::Config {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => IoError::File {
                path: PathBuf::new(),
                source,
            },
            other => IoError::Csv {
                line,
                reason: format!("{other:?}"),
            },
        }
    }
}
