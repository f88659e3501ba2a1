//! Recovery of a residual MLP whose linear layers were shuffled into
//! unlabeled pieces.
//!
//! The crate is split along the pipeline:
//!
//! * [`linalg`]: small dense row-major kernels.
//! * [`model`]: pieces, paired blocks, networks, datasets and the MSE objective.
//! * [`generator`]: synthetic data, a hand-written trainer (backprop + Adam) and
//!   the shuffling step that turns a trained network into a puzzle instance.
//! * [`pairing`]: diagonal dominance ratio and assignment of input to output
//!   projections.
//! * [`ordering`]: seed orderings, swap-gap comparisons, Bradley-Terry ranking
//!   and adjacent-swap repair.
//! * [`diagnostics`]: trace-sign census, isometry residuals and random baselines.
//!
//! Everything here is `no_std` + `alloc`; file formats and the command line
//! live in the companion `reassembly-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod diagnostics;
mod error;
pub mod generator;
pub mod linalg;
pub mod model;
pub mod ordering;
pub mod pairing;
mod solution;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use model::{Census, Dataset, Network, PairedBlock, Piece, PieceId, PieceKind, Target};
pub use solution::Solution;

/// Width of the residual stream.
pub const IN_DIM: usize = 48;
/// Width of each block's hidden layer.
pub const HIDDEN_DIM: usize = 96;
/// Number of residual blocks in a full-size instance.
pub const DEFAULT_BLOCKS: usize = 48;
