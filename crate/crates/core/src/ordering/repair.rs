use alloc::vec::Vec;

use super::eval::Evaluator;
use super::{check_permutation, Ordering, IMPROVEMENT_TOL};
use crate::error::{Error, Result};
use crate::model::{Dataset, PairedBlock, Piece};

/// One full left-to-right sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairRound {
    /// 1-based sweep number.
    pub round: usize,
    pub swaps: usize,
    /// MSE after the sweep.
    pub mse: f64,
    pub cumulative_swaps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairTrace {
    /// MSE of the starting ordering.
    pub initial_mse: f64,
    pub rounds: Vec<RepairRound>,
    /// `true` when the last sweep made no swap; `false` when the round cap
    /// was hit first.
    pub converged: bool,
}

impl RepairTrace {
    pub fn final_mse(&self) -> f64 {
        self.rounds.last().map_or(self.initial_mse, |r| r.mse)
    }

    pub fn total_swaps(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.cumulative_swaps)
    }
}

/// Adjacent-swap hill climbing on the full-dataset MSE against `pred`.
///
/// Each sweep visits positions `0..n-1` in order and swaps the blocks at
/// `p` and `p + 1` when that lowers the MSE by more than
/// [`IMPROVEMENT_TOL`]. Sweeps repeat until one makes no swap or
/// `max_rounds` sweeps have run.
pub fn bubble_repair(
    start: &Ordering,
    blocks: &[PairedBlock],
    last: &Piece,
    ds: &Dataset,
    max_rounds: usize,
) -> Result<(Ordering, RepairTrace)> {
    windowed_repair(start, blocks, last, ds, max_rounds, 1)
}

/// [`bubble_repair`] generalised to swaps between positions `p` and `p + d`
/// for every `d` in `1..=window`, tried in increasing `d` at each `p`.
pub fn windowed_repair(
    start: &Ordering,
    blocks: &[PairedBlock],
    last: &Piece,
    ds: &Dataset,
    max_rounds: usize,
    window: usize,
) -> Result<(Ordering, RepairTrace)> {
    check_permutation(&start.sequence, blocks.len())?;
    if window == 0 {
        return Err(Error::Config("repair window must be at least 1"));
    }
    let eval = Evaluator::new(blocks, last, ds, ds.len());
    let rows = eval.rows() as f64;
    let mut order = start.sequence.clone();
    let n = order.len();
    let mut current = eval.mse(&order);
    let mut trace = RepairTrace {
        initial_mse: current,
        rounds: Vec::new(),
        converged: false,
    };
    let mut hidden = Vec::new();
    let mut cumulative = 0;
    for round in 1..=max_rounds {
        let mut swaps = 0;
        // Residual stream entering position p under the current order.
        let mut state = eval.inputs().to_vec();
        let mut trial = Vec::with_capacity(state.len());
        for p in 0..n.saturating_sub(1) {
            for d in 1..=window.min(n - 1 - p) {
                order.swap(p, p + d);
                let threshold = current - IMPROVEMENT_TOL;
                // Slack keeps the early exit strictly weaker than the final test.
                let abort_above = threshold.max(0.0) * rows * (1.0 + 1e-9);
                trial.clear();
                trial.extend_from_slice(&state);
                for &k in &order[p..=p + d] {
                    eval.apply(k, &mut trial, &mut hidden);
                }
                let accepted = match eval.sse_from(&trial, &order[p + d + 1..], abort_above) {
                    Some(sse) if sse / rows < threshold => {
                        current = sse / rows;
                        true
                    }
                    _ => false,
                };
                if accepted {
                    swaps += 1;
                } else {
                    order.swap(p, p + d);
                }
            }
            eval.apply(order[p], &mut state, &mut hidden);
        }
        cumulative += swaps;
        trace.rounds.push(RepairRound {
            round,
            swaps,
            mse: current,
            cumulative_swaps: cumulative,
        });
        if swaps == 0 {
            trace.converged = true;
            break;
        }
    }
    Ok((
        Ordering {
            sequence: order,
            last_id: start.last_id,
        },
        trace,
    ))
}
