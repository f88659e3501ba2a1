use alloc::vec;
use alloc::vec::Vec;

use super::gaps::GapMatrix;
use super::{Ordering, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};

/// Win weights are kept inside `[WIN_FLOOR, 1 - WIN_FLOOR]`. With a hard
/// 0/1 weight the likelihood has no finite maximiser (the last-ranked item's
/// strength collapses to zero), so every comparison keeps a trace of both
/// outcomes.
const WIN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtConfig {
    /// Gap scale of the sigmoid turning gaps into win probabilities.
    pub temperature: f64,
    pub max_iterations: usize,
    /// Stop once the largest relative strength change falls below this.
    pub tolerance: f64,
}

impl Default for BtConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_iterations: 10_000,
            tolerance: 1e-10,
        }
    }
}

/// Fitted Bradley-Terry strengths; a higher strength means "runs earlier".
#[derive(Debug, Clone, PartialEq)]
pub struct BtStrengths {
    /// One positive value per block, geometric mean 1.
    pub strengths: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Soft win probability that block `i` precedes block `j`.
fn win_weight(gaps: &GapMatrix, i: usize, j: usize, temperature: f64) -> f64 {
    let z = gaps.margin(i, j) / temperature;
    let p = if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    };
    p.clamp(WIN_FLOOR, 1.0 - WIN_FLOOR)
}

/// Fits strengths from uniform starting values.
pub fn bt_fit(gaps: &GapMatrix, config: &BtConfig) -> Result<BtStrengths> {
    bt_fit_from(gaps, config, &vec![1.0; gaps.len()])
}

/// Hunter's MM iteration for the Bradley-Terry likelihood with fractional
/// wins `w_ij = σ(margin_ij / T)`:
///
/// `s_i ← Σ_{j≠i} w_ij / Σ_{j≠i} (w_ij + w_ji) / (s_i + s_j)`,
///
/// all strengths updated together, then rescaled to geometric mean 1.
pub fn bt_fit_from(gaps: &GapMatrix, config: &BtConfig, initial: &[f64]) -> Result<BtStrengths> {
    if !(config.temperature > 0.0) {
        return Err(Error::Config("temperature must be positive"));
    }
    let n = gaps.len();
    if initial.len() != n || initial.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Config("initial strengths must be positive, one per block"));
    }
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i * n + j] = win_weight(gaps, i, j, config.temperature);
            }
        }
    }
    let wins: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| w[i * n + j]).sum())
        .collect();

    let mut s = initial.to_vec();
    normalize(&mut s);
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = n < 2;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        for i in 0..n {
            let denom: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (w[i * n + j] + w[j * n + i]) / (s[i] + s[j]))
                .sum();
            next[i] = wins[i] / denom;
        }
        normalize(&mut next);
        if next.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::StrengthNotFinite {
                iteration: iterations,
            });
        }
        let change = s
            .iter()
            .zip(&next)
            .map(|(old, new)| ((new - old) / old).abs())
            .fold(0.0, f64::max);
        core::mem::swap(&mut s, &mut next);
        converged = change < config.tolerance;
    }
    Ok(BtStrengths {
        strengths: s,
        iterations,
        converged,
    })
}

fn normalize(s: &mut [f64]) {
    if s.is_empty() {
        return;
    }
    let mean_log = s.iter().map(|v| libm::log(*v)).sum::<f64>() / s.len() as f64;
    let scale = libm::exp(-mean_log);
    for v in s.iter_mut() {
        *v *= scale;
    }
}

/// Blocks by descending strength; equal strengths keep their seed order.
pub fn bt_order(strengths: &BtStrengths, seed: &Ordering) -> Result<Ordering> {
    let s = &strengths.strengths;
    if s.len() != seed.len() {
        return Err(Error::Ordering("strengths and seed cover different block counts"));
    }
    let pos = seed.positions();
    let mut sequence: Vec<usize> = (0..s.len()).collect();
    sequence.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(pos[a].cmp(&pos[b])));
    Ok(Ordering {
        sequence,
        last_id: seed.last_id,
    })
}
