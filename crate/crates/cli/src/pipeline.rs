//! The solver pipeline: pairing, a seed ordering, optional Bradley-Terry
//! re-ranking and repair down to zero error.

use reassembly_core::ordering::{
    self, bt_fit, bt_order, bubble_repair, count_transitivity_violations, seed_order,
    swap_gap_matrix, windowed_repair, BtConfig, Ordering, RepairRound, RepairTrace, SeedStrategy,
    Transitivity,
};
use reassembly_core::pairing::{pair_blocks, SeparationReport};
use reassembly_core::{Census, Dataset, PairedBlock, Result, Solution};
use serde::Serialize;

/// Final MSE against `pred` that counts as an exact reassembly.
pub const EXACT_MSE: f64 = 1e-10;
/// Widest swap distance tried when plain adjacent repair gets stuck.
pub const ESCALATION_WINDOW: usize = 3;
/// Windowed passes tried before giving up.
const MAX_ESCALATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub seed_strategy: SeedStrategy,
    pub use_bt: bool,
    pub n_cmp: usize,
    pub temperature: f64,
    pub max_rounds: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            seed_strategy: SeedStrategy::DeltaNorm,
            use_bt: true,
            n_cmp: ordering::DEFAULT_N_CMP,
            temperature: ordering::DEFAULT_TEMPERATURE,
            max_rounds: ordering::DEFAULT_MAX_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BtSummary {
    /// Rows used for the swap gaps.
    pub n_cmp: usize,
    pub iterations: usize,
    pub converged: bool,
    pub violations: usize,
    pub cycles: usize,
    pub triples: usize,
    /// Full-data MSE of the BT ordering.
    pub mse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTrace {
    /// `"bubble"` or `"window-3"`.
    pub stage: String,
    pub initial_mse: f64,
    pub rounds: Vec<RoundRow>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RoundRow {
    pub round: usize,
    pub swaps: usize,
    pub mse: f64,
    pub cumulative_swaps: usize,
}

impl From<RepairRound> for RoundRow {
    fn from(r: RepairRound) -> Self {
        Self {
            round: r.round,
            swaps: r.swaps,
            mse: r.mse,
            cumulative_swaps: r.cumulative_swaps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: Solution,
    pub blocks: Vec<PairedBlock>,
    pub pairing: SeparationReport,
    pub seed: Ordering,
    /// Full-data MSE of the seed ordering.
    pub seed_mse: f64,
    pub bt: Option<BtSummary>,
    pub start: Ordering,
    pub repairs: Vec<StageTrace>,
    pub final_mse: f64,
    /// Every repair stage ended on a sweep without swaps.
    pub repair_converged: bool,
}

impl SolveOutcome {
    pub fn exact(&self) -> bool {
        self.final_mse <= EXACT_MSE
    }

    /// Rounds of all repair stages, renumbered consecutively.
    pub fn rounds(&self) -> Vec<RoundRow> {
        let mut out = Vec::new();
        let mut cumulative = 0;
        for stage in &self.repairs {
            for r in &stage.rounds {
                out.push(RoundRow {
                    round: out.len() + 1,
                    swaps: r.swaps,
                    mse: r.mse,
                    cumulative_swaps: cumulative + r.cumulative_swaps,
                });
            }
            cumulative += stage.rounds.last().map_or(0, |r| r.cumulative_swaps);
        }
        out
    }
}

/// Pairs the census and builds the blocks in input-id order.
pub fn pair(census: &Census) -> Result<(Vec<PairedBlock>, SeparationReport)> {
    pair_blocks(&census.inputs, &census.outputs)
}

/// Seed, then optionally the BT re-ranking. Returns the seed, its MSE, the
/// ordering to repair from and the BT summary.
pub fn initial_order(
    blocks: &[PairedBlock],
    census: &Census,
    ds: &Dataset,
    opts: &SolveOptions,
) -> Result<(Ordering, f64, Ordering, Option<BtSummary>)> {
    let last = &census.last;
    let seed = seed_order(blocks, last.id(), opts.seed_strategy, Some(ds))?;
    let seed_mse = ordering::ordering_mse(&seed, blocks, last, ds, ds.len())?;
    if !opts.use_bt {
        return Ok((seed.clone(), seed_mse, seed, None));
    }
    let n_cmp = opts.n_cmp.min(ds.len());
    let gaps = swap_gap_matrix(&seed, blocks, last, ds, n_cmp)?;
    let Transitivity {
        violations,
        triples,
        cycles,
    } = count_transitivity_violations(&gaps);
    let config = BtConfig {
        temperature: opts.temperature,
        ..BtConfig::default()
    };
    let strengths = bt_fit(&gaps, &config)?;
    let ranked = bt_order(&strengths, &seed)?;
    let mse = ordering::ordering_mse(&ranked, blocks, last, ds, ds.len())?;
    let summary = BtSummary {
        n_cmp,
        iterations: strengths.iterations,
        converged: strengths.converged,
        violations,
        cycles: cycles.len(),
        triples,
        mse,
    };
    Ok((seed, seed_mse, ranked, Some(summary)))
}

fn stage(name: &str, trace: &RepairTrace) -> StageTrace {
    StageTrace {
        stage: name.to_string(),
        initial_mse: trace.initial_mse,
        rounds: trace.rounds.iter().copied().map(RoundRow::from).collect(),
        converged: trace.converged,
    }
}

/// Adjacent-swap repair; if it settles above [`EXACT_MSE`], alternates
/// windowed and adjacent passes while they keep improving.
pub fn repair(
    start: &Ordering,
    blocks: &[PairedBlock],
    census: &Census,
    ds: &Dataset,
    max_rounds: usize,
) -> Result<(Ordering, Vec<StageTrace>, f64)> {
    let last = &census.last;
    let (mut order, trace) = bubble_repair(start, blocks, last, ds, max_rounds)?;
    let mut mse = trace.final_mse();
    let mut stages = vec![stage("bubble", &trace)];
    for _ in 0..MAX_ESCALATIONS {
        if mse <= EXACT_MSE || !trace_converged(&stages) {
            break;
        }
        let (wide, t) = windowed_repair(&order, blocks, last, ds, max_rounds, ESCALATION_WINDOW)?;
        stages.push(stage(&format!("window-{ESCALATION_WINDOW}"), &t));
        if t.final_mse() >= mse {
            break;
        }
        let (next, t) = bubble_repair(&wide, blocks, last, ds, max_rounds)?;
        stages.push(stage("bubble", &t));
        order = next;
        mse = t.final_mse();
    }
    Ok((order, stages, mse))
}

fn trace_converged(stages: &[StageTrace]) -> bool {
    stages.iter().all(|s| s.converged)
}

/// The whole pipeline. Never looks at a sealed solution.
pub fn solve(census: &Census, ds: &Dataset, opts: &SolveOptions) -> Result<SolveOutcome> {
    let (blocks, pairing) = pair(census)?;
    let (seed, seed_mse, start, bt) = initial_order(&blocks, census, ds, opts)?;
    let (order, repairs, final_mse) = repair(&start, &blocks, census, ds, opts.max_rounds)?;
    let solution = Solution {
        pairs: blocks.iter().map(|b| (b.input().id(), b.output().id())).collect(),
        order: order.sequence.clone(),
        last_id: census.last.id(),
    };
    let repair_converged = trace_converged(&repairs);
    Ok(SolveOutcome {
        solution,
        blocks,
        pairing,
        seed,
        seed_mse,
        bt,
        start,
        repairs,
        final_mse,
        repair_converged,
    })
}
