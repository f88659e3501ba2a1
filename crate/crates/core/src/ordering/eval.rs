use alloc::vec::Vec;

use crate::model::{self, Dataset, PairedBlock, Piece, Target, ROW_CHUNK};
use crate::IN_DIM;

/// Rows per chunk when a suffix evaluation may stop early.
const ABORT_CHUNK: usize = 1024;

/// Scores orderings of a fixed block set on a fixed row prefix.
///
/// The search procedures only ever change the network from some position
/// onwards, so the evaluator works on cached residual-stream states: given
/// the state entering position `p`, only blocks `p..` are re-run.
pub(crate) struct Evaluator<'a> {
    blocks: &'a [PairedBlock],
    last: &'a Piece,
    x: &'a [f64],
    target: &'a [f64],
    rows: usize,
}

impl<'a> Evaluator<'a> {
    pub(crate) fn new(blocks: &'a [PairedBlock], last: &'a Piece, ds: &'a Dataset, rows: usize) -> Self {
        Self {
            blocks,
            last,
            x: ds.x_prefix(rows),
            target: &ds.target(Target::Pred)[..rows],
            rows,
        }
    }

    #[inline]
    pub(crate) fn rows(&self) -> usize {
        self.rows
    }

    pub(crate) fn inputs(&self) -> &'a [f64] {
        self.x
    }

    pub(crate) fn mse(&self, order: &[usize]) -> f64 {
        self.sse_from(self.x, order, f64::INFINITY)
            .expect("no abort threshold")
            / self.rows as f64
    }

    /// States entering each position of `order`; entry `p` is `rows x 48`.
    pub(crate) fn prefix_states(&self, order: &[usize]) -> Vec<Vec<f64>> {
        let mut states = Vec::with_capacity(order.len());
        let mut current = self.x.to_vec();
        let mut hidden = Vec::new();
        for &k in order {
            states.push(current.clone());
            self.apply(k, &mut current, &mut hidden);
        }
        states
    }

    /// `state ← Block_k(state)` over all rows.
    pub(crate) fn apply(&self, k: usize, state: &mut [f64], hidden: &mut Vec<f64>) {
        for chunk in state.chunks_mut(ROW_CHUNK * IN_DIM) {
            let n = chunk.len() / IN_DIM;
            model::apply_block_rows(&self.blocks[k], chunk, n, hidden);
        }
    }

    /// Sum of squared errors after running `tail` on `state` and reading
    /// out. Returns `None` as soon as the running sum exceeds `abort_above`;
    /// the sum is accumulated in row order either way.
    pub(crate) fn sse_from(&self, state: &[f64], tail: &[usize], abort_above: f64) -> Option<f64> {
        let mut sse = 0.0;
        let mut work = Vec::with_capacity(ABORT_CHUNK * IN_DIM);
        let mut hidden = Vec::new();
        let mut out = Vec::new();
        for start in (0..self.rows).step_by(ABORT_CHUNK) {
            let n = ABORT_CHUNK.min(self.rows - start);
            work.clear();
            work.extend_from_slice(&state[start * IN_DIM..(start + n) * IN_DIM]);
            for sub in work.chunks_mut(ROW_CHUNK * IN_DIM) {
                let m = sub.len() / IN_DIM;
                for &k in tail {
                    model::apply_block_rows(&self.blocks[k], sub, m, &mut hidden);
                }
            }
            model::readout_rows(self.last, &work, &mut out);
            for (o, t) in out.iter().zip(&self.target[start..start + n]) {
                sse += (o - t) * (o - t);
            }
            if sse > abort_above {
                return None;
            }
        }
        Some(sse)
    }
}
