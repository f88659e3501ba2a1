//! Recovering the running order of paired blocks.
//!
//! The pipeline is: a cheap seed ordering ([`seed_order`]), optionally a
//! global re-ranking from pairwise swap comparisons ([`swap_gap_matrix`],
//! [`bt_fit`], [`bt_order`]), and finally adjacent-swap hill climbing on the
//! MSE against the recorded predictions ([`bubble_repair`]).
//!
//! Block indices everywhere refer to positions in the `blocks` slice handed
//! in by the caller (usually the output of pairing).

mod bt;
mod eval;
mod gaps;
mod repair;
mod seed;

use alloc::vec;
use alloc::vec::Vec;

pub use bt::{bt_fit, bt_fit_from, bt_order, BtConfig, BtStrengths};
pub use gaps::{count_transitivity_violations, swap_gap_matrix, GapMatrix, Transitivity};
pub use repair::{bubble_repair, windowed_repair, RepairRound, RepairTrace};
pub use seed::{delta_norms, seed_order, SeedStrategy};

use crate::error::{Error, Result};
use crate::model::{Dataset, PairedBlock, Piece, PieceId};

/// Default number of rows used for swap-gap comparisons.
pub const DEFAULT_N_CMP: usize = 2000;
/// Default sigmoid temperature for turning swap gaps into win probabilities.
pub const DEFAULT_TEMPERATURE: f64 = 1e-3;
/// Default sweep cap for the repair step.
pub const DEFAULT_MAX_ROUNDS: usize = 100;
/// Smallest MSE decrease that counts as an improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-15;

/// A candidate running order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    /// Block indices, first block first.
    pub sequence: Vec<usize>,
    /// Id of the readout piece.
    pub last_id: PieceId,
}

impl Ordering {
    pub fn new(sequence: Vec<usize>, last_id: PieceId) -> Result<Self> {
        check_permutation(&sequence, sequence.len())?;
        Ok(Self { sequence, last_id })
    }

    pub fn identity(n: usize, last_id: PieceId) -> Self {
        Self {
            sequence: (0..n).collect(),
            last_id,
        }
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// `positions()[k]` is where block `k` runs.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.sequence.len()];
        for (p, &k) in self.sequence.iter().enumerate() {
            pos[k] = p;
        }
        pos
    }
}

/// Fails unless `order` holds each of `0..n` exactly once.
pub fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::Ordering("length differs from the number of blocks"));
    }
    let mut seen = vec![false; n];
    for &k in order {
        if k >= n {
            return Err(Error::Ordering("block index out of range"));
        }
        if seen[k] {
            return Err(Error::Ordering("block index repeats"));
        }
        seen[k] = true;
    }
    Ok(())
}

/// MSE against `pred` over the first `rows` rows for `ordering`.
pub fn ordering_mse(
    ordering: &Ordering,
    blocks: &[PairedBlock],
    last: &Piece,
    ds: &Dataset,
    rows: usize,
) -> Result<f64> {
    check_permutation(&ordering.sequence, blocks.len())?;
    if rows == 0 || rows > ds.len() {
        return Err(Error::RowRange {
            requested: rows,
            available: ds.len(),
        });
    }
    Ok(eval::Evaluator::new(blocks, last, ds, rows).mse(&ordering.sequence))
}

/// Spearman rank correlation between two orderings of the same blocks.
pub fn spearman(a: &Ordering, b: &Ordering) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return 1.0;
    }
    let pa = a.positions();
    let pb = b.positions();
    let d2: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
