//! Measurements of the structure pairing relies on: negative traces of
//! `W_out · W_in`, how far each block is from a Jacobian isometry, and what
//! the dominance ratio looks like for unrelated factors.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{self, Dataset, PairedBlock};
use crate::pairing::{self, dominance_matrix};
use crate::{HIDDEN_DIM, IN_DIM};

/// Rows used by [`isometry_residual`] when the dataset has more.
pub const ISOMETRY_ROWS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    /// `tr(W_out · W_in)` per block.
    pub traces: Vec<f64>,
    pub negative: usize,
}

pub fn trace_report(blocks: &[PairedBlock]) -> TraceReport {
    let traces: Vec<f64> = blocks
        .iter()
        .map(|b| linalg::trace(&b.weight_product()).expect("block products are square"))
        .collect();
    let negative = traces.iter().filter(|t| **t < 0.0).count();
    TraceReport { traces, negative }
}

/// `M = ε_s·I + E` with `ε_s = tr(M)/d`, so `tr(E) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// `|tr(M)| / d`.
    pub epsilon: f64,
    /// Trace-free remainder.
    pub remainder: Matrix,
    pub frobenius_sq: f64,
    pub remainder_sq: f64,
}

impl Decomposition {
    /// `|‖M‖² − (ε²d + ‖E‖²)|`.
    pub fn identity_error(&self) -> f64 {
        let d = self.remainder.rows() as f64;
        (self.frobenius_sq - (self.epsilon * self.epsilon * d + self.remainder_sq)).abs()
    }

    /// Dominance ratio expressed through the decomposition,
    /// `ε·d / √(ε²d + ‖E‖²)`.
    pub fn ratio(&self) -> f64 {
        let d = self.remainder.rows() as f64;
        let denom = libm::sqrt(self.epsilon * self.epsilon * d + self.remainder_sq);
        if denom == 0.0 {
            0.0
        } else {
            self.epsilon * d / denom
        }
    }
}

pub fn decompose(m: &Matrix) -> Result<Decomposition> {
    let tr = linalg::trace(m)?;
    let d = m.rows();
    let shift = tr / d as f64;
    let mut remainder = m.clone();
    for i in 0..d {
        remainder.as_mut_slice()[i * d + i] -= shift;
    }
    let f = linalg::frobenius_norm(m);
    let e = linalg::frobenius_norm(&remainder);
    Ok(Decomposition {
        epsilon: shift.abs(),
        remainder,
        frobenius_sq: f * f,
        remainder_sq: e * e,
    })
}

/// `J_r(x) = W_out · D(x) · W_in`, the Jacobian of the residual branch.
pub fn residual_jacobian(block: &PairedBlock, x: &Vector) -> Result<Matrix> {
    if x.len() != IN_DIM {
        return Err(Error::DataLength {
            expected: IN_DIM,
            actual: x.len(),
        });
    }
    let pre = block.input().weight().mul_vec(x)?;
    let b_in = block.input().bias();
    let w_out = block.output().weight();
    let gated = Matrix::from_fn(IN_DIM, HIDDEN_DIM, |i, j| {
        if pre[j] + b_in[j] > 0.0 {
            w_out[(i, j)]
        } else {
            0.0
        }
    });
    linalg::matmul(&gated, block.input().weight())
}

/// Per-block Jacobian statistics over the states each block actually sees.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryReport {
    /// `|2·mean tr(J_r) + mean ‖J_r‖_F²|` per block.
    pub residuals: Vec<f64>,
    pub mean_trace: Vec<f64>,
    pub mean_jacobian_sq: Vec<f64>,
    /// Fraction of active hidden units per block.
    pub relu_fraction: Vec<f64>,
    pub rows: usize,
}

impl IsometryReport {
    pub fn median_residual(&self) -> f64 {
        median(&self.residuals)
    }
}

/// Runs the first `min(len, ISOMETRY_ROWS)` rows through `blocks` in the
/// given order and measures each block's Jacobian on its own inputs.
///
/// Uses `tr(J) = Σ_j D_j (W_out)_{:,j}·(W_in)_{j,:}` and
/// `‖J‖² = Σ_{j,l} D_j D_l (W_outᵀW_out)_{jl} (W_in W_inᵀ)_{jl}`.
pub fn isometry_residual(blocks: &[PairedBlock], ds: &Dataset) -> Result<IsometryReport> {
    if ds.is_empty() {
        return Err(Error::Dataset("isometry residual needs at least one row"));
    }
    let n = ds.len().min(ISOMETRY_ROWS);
    let mut states = ds.x_prefix(n).to_vec();
    let mut hidden = vec![0.0; n * HIDDEN_DIM];
    let mut scratch = Vec::new();
    let mut report = IsometryReport {
        residuals: Vec::with_capacity(blocks.len()),
        mean_trace: Vec::with_capacity(blocks.len()),
        mean_jacobian_sq: Vec::with_capacity(blocks.len()),
        relu_fraction: Vec::with_capacity(blocks.len()),
        rows: n,
    };
    for block in blocks {
        let w_in = block.input().weight();
        let w_out = block.output().weight();
        let gram_out = linalg::matmul(&w_out.transpose(), w_out)?;
        let gram_in = linalg::matmul(w_in, &w_in.transpose())?;
        let diag: Vec<f64> = (0..HIDDEN_DIM)
            .map(|j| (0..IN_DIM).map(|i| w_out[(i, j)] * w_in[(j, i)]).sum())
            .collect();
        let weights = Matrix::from_fn(HIDDEN_DIM, HIDDEN_DIM, |j, l| gram_out[(j, l)] * gram_in[(j, l)]);

        linalg::affine_rows(&states, n, w_in, block.input().bias().as_slice(), &mut hidden);
        let (mut tr_sum, mut sq_sum, mut active) = (0.0, 0.0, 0usize);
        let mut on = Vec::with_capacity(HIDDEN_DIM);
        for row in hidden.chunks_exact(HIDDEN_DIM) {
            on.clear();
            on.extend((0..HIDDEN_DIM).filter(|&j| row[j] > 0.0));
            active += on.len();
            tr_sum += on.iter().map(|&j| diag[j]).sum::<f64>();
            for &j in &on {
                let w = weights.row(j);
                sq_sum += on.iter().map(|&l| w[l]).sum::<f64>();
            }
        }
        let mean_tr = tr_sum / n as f64;
        let mean_sq = sq_sum / n as f64;
        report.mean_trace.push(mean_tr);
        report.mean_jacobian_sq.push(mean_sq);
        report.residuals.push((2.0 * mean_tr + mean_sq).abs());
        report.relu_fraction.push(active as f64 / (n * HIDDEN_DIM) as f64);
        model::apply_block_rows(block, &mut states, n, &mut scratch);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub mean: f64,
    pub std: f64,
    /// `std / √trials`.
    pub std_error: f64,
    pub trials: usize,
}

/// Monte-Carlo dominance ratio of `W_out · W_in` for independent standard
/// normal factors of shapes `d x h` and `h x d`.
pub fn random_baseline(d: usize, h: usize, trials: usize, seed: u64) -> Result<Baseline> {
    scaled_baseline(d, h, trials, seed, 1.0, 1.0)
}

fn scaled_baseline(d: usize, h: usize, trials: usize, seed: u64, s_out: f64, s_in: f64) -> Result<Baseline> {
    if trials < 100 {
        return Err(Error::Config("random baseline needs at least 100 trials"));
    }
    if d == 0 || h == 0 {
        return Err(Error::Config("baseline dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut draw = |rows: usize, cols: usize, s: f64| {
            Matrix::from_fn(rows, cols, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                s * z
            })
        };
        let w_out = draw(d, h, s_out);
        let w_in = draw(h, d, s_in);
        ratios.push(pairing::dominance_ratio(&w_out, &w_in)?);
    }
    let n = trials as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    let std = libm::sqrt(var);
    Ok(Baseline {
        mean,
        std,
        std_error: std / libm::sqrt(n),
        trials,
    })
}

/// Everything the diagnostics know about one assembled network.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub traces: Vec<f64>,
    pub negative_traces: usize,
    /// `‖W_out · W_in‖_F` per block.
    pub frobenius: Vec<f64>,
    /// Dominance ratio of each block's own product.
    pub dominance: Vec<f64>,
    pub relu_fraction: Vec<f64>,
    pub isometry_residual: Vec<f64>,
    pub median_isometry_residual: f64,
    /// Largest `|‖M‖² − (ε²d + ‖E‖²)|` over the blocks.
    pub max_decomposition_error: f64,
    /// Smallest own-pair score minus the largest cross-pair score.
    pub separation_gap: f64,
    pub baseline: Baseline,
}

/// Builds a [`TheoryReport`] for blocks given in running order.
pub fn theory_report(
    blocks: &[PairedBlock],
    ds: &Dataset,
    baseline_trials: usize,
    seed: u64,
) -> Result<TheoryReport> {
    let traces = trace_report(blocks);
    let products: Vec<Matrix> = blocks.iter().map(PairedBlock::weight_product).collect();
    let frobenius = products.iter().map(linalg::frobenius_norm).collect();
    let dominance = products.iter().map(pairing::ratio_of).collect();
    let mut max_err: f64 = 0.0;
    for m in &products {
        max_err = max_err.max(decompose(m)?.identity_error());
    }
    let inputs: Vec<_> = blocks.iter().map(|b| b.input().clone()).collect();
    let outputs: Vec<_> = blocks.iter().map(|b| b.output().clone()).collect();
    let dm = dominance_matrix(&inputs, &outputs)?;
    let n = blocks.len();
    let (mut own, mut cross) = (f64::INFINITY, if n > 1 { f64::NEG_INFINITY } else { 0.0 });
    for i in 0..n {
        for j in 0..n {
            let s = dm.scores[(i, j)];
            if i == j {
                own = own.min(s);
            } else {
                cross = cross.max(s);
            }
        }
    }
    let iso = isometry_residual(blocks, ds)?;
    Ok(TheoryReport {
        negative_traces: traces.negative,
        traces: traces.traces,
        frobenius,
        dominance,
        median_isometry_residual: iso.median_residual(),
        relu_fraction: iso.relu_fraction,
        isometry_residual: iso.residuals,
        max_decomposition_error: max_err,
        separation_gap: own - cross,
        baseline: random_baseline(IN_DIM, HIDDEN_DIM, baseline_trials, seed)?,
    })
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
