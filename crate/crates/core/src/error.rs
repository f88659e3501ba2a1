use thiserror::Error;

use crate::model::PieceId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("{op}: expected a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("matrix data has length {actual}, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("piece {id}: shape {rows}x{cols} is not an allowed layer shape")]
    PieceShape {
        id: PieceId,
        rows: usize,
        cols: usize,
    },
    #[error("piece {id}: bias length {bias_len} does not match {rows} weight rows")]
    BiasLength {
        id: PieceId,
        rows: usize,
        bias_len: usize,
    },
    #[error("piece census: expected {expected_in} input, {expected_out} output and 1 last-layer pieces, found {inputs}/{outputs}/{lasts}")]
    Census {
        expected_in: usize,
        expected_out: usize,
        inputs: usize,
        outputs: usize,
        lasts: usize,
    },
    #[error("duplicate piece id {0}")]
    DuplicateId(PieceId),
    #[error("unknown piece id {0}")]
    UnknownId(PieceId),
    #[error("dataset: {0}")]
    Dataset(&'static str),
    #[error("row count {requested} out of range 1..={available}")]
    RowRange { requested: usize, available: usize },
    #[error("invalid ordering: {0}")]
    Ordering(&'static str),
    #[error("the delta-norm seed strategy needs a dataset")]
    MissingDataset,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },
    #[error("Bradley-Terry update produced a non-finite strength at iteration {iteration}")]
    StrengthNotFinite { iteration: usize },
    #[error("solution: {0}")]
    Solution(&'static str),
}
