//! On-disk formats: binary piece files, the dataset CSV, solution JSON and
//! the instance directory that ties them together.

mod dataset;
mod instance;
mod piece;
mod solution;

use std::path::PathBuf;

pub use dataset::{read_dataset, write_dataset, COLUMNS};
pub use instance::{
    piece_path, read_instance, write_instance, Instance, DATASET_FILE, PIECES_DIR, SEALED_FILE,
};
pub use piece::{decode_piece, encode_piece, read_piece, write_piece, MAGIC, VERSION};
pub use solution::{read_solution, solution_json, write_solution, PairEntry, SolutionFile};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:?}, expected \"RLP1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported piece format version {version}")]
    Version { path: PathBuf, version: u32 },
    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: {actual} bytes where exactly {expected} were expected")]
    TrailingBytes {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: bias length {bias_len} does not match {rows} rows")]
    BiasLength {
        path: PathBuf,
        rows: usize,
        bias_len: usize,
    },
    #[error("{path}: {source}")]
    Piece {
        path: PathBuf,
        source: reassembly_core::Error,
    },
    #[error("{path}: header mismatch: {message}")]
    Header { path: PathBuf, message: String },
    #[error("{path}: row {row}, column {column}: {message}")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Solution { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        source: reassembly_core::Error,
    },
}

pub type IoResult<T> = Result<T, IoError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}
