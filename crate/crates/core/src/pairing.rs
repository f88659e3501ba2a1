//! Matching input projections to output projections.
//!
//! For a correctly paired block, `W_out · W_in` carries a strong negative
//! diagonal, so the ratio `|tr(M)| / ‖M‖_F` is large (at most `√d`). For an
//! unrelated input/output pair the product behaves like a random matrix and
//! the ratio sits near `1/√d`. Scoring all candidate pairs and solving the
//! assignment problem on the score table recovers the blocks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{PairedBlock, Piece, PieceId, PieceKind};

/// `|tr(w_out · w_in)| / ‖w_out · w_in‖_F`, or 0 for a zero product.
pub fn dominance_ratio(w_out: &Matrix, w_in: &Matrix) -> Result<f64> {
    if w_out.cols() != w_in.rows() || w_out.rows() != w_in.cols() {
        return Err(Error::DimensionMismatch {
            op: "dominance_ratio",
            left_rows: w_out.rows(),
            left_cols: w_out.cols(),
            right_rows: w_in.rows(),
            right_cols: w_in.cols(),
        });
    }
    let product = linalg::matmul(w_out, w_in)?;
    Ok(ratio_of(&product))
}

pub(crate) fn ratio_of(product: &Matrix) -> f64 {
    let norm = linalg::frobenius_norm(product);
    if norm == 0.0 {
        return 0.0;
    }
    let tr = linalg::trace(product).expect("dominance products are square");
    tr.abs() / norm
}

/// Scores of every (input projection, output projection) candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceMatrix {
    /// `scores[(i, j)]` pairs input `input_ids[i]` with output `output_ids[j]`.
    pub scores: Matrix,
    pub input_ids: Vec<PieceId>,
    pub output_ids: Vec<PieceId>,
}

pub fn dominance_matrix(inputs: &[Piece], outputs: &[Piece]) -> Result<DominanceMatrix> {
    let bad_census = || Error::Census {
        expected_in: inputs.len().max(outputs.len()),
        expected_out: inputs.len().max(outputs.len()),
        inputs: inputs.iter().filter(|p| p.kind() == PieceKind::Input).count(),
        outputs: outputs.iter().filter(|p| p.kind() == PieceKind::Output).count(),
        lasts: 0,
    };
    if inputs.is_empty()
        || inputs.len() != outputs.len()
        || inputs.iter().any(|p| p.kind() != PieceKind::Input)
        || outputs.iter().any(|p| p.kind() != PieceKind::Output)
    {
        return Err(bad_census());
    }
    let n = inputs.len();
    let score_row = |i: usize| -> Vec<f64> {
        outputs
            .iter()
            .map(|o| {
                dominance_ratio(o.weight(), inputs[i].weight())
                    .expect("census guarantees compatible shapes")
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(score_row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..n).map(score_row).collect();

    let scores = Matrix::new(n, n, rows.into_iter().flatten().collect())?;
    Ok(DominanceMatrix {
        scores,
        input_ids: inputs.iter().map(Piece::id).collect(),
        output_ids: outputs.iter().map(Piece::id).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// A perfect matching of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `col_of_row[i]` is the column matched to row `i`.
    pub col_of_row: Vec<usize>,
    pub total_score: f64,
}

impl Assignment {
    /// `(input id, output id)` pairs in input-row order.
    pub fn id_pairs(&self, dm: &DominanceMatrix) -> Vec<(PieceId, PieceId)> {
        self.col_of_row
            .iter()
            .enumerate()
            .map(|(i, &j)| (dm.input_ids[i], dm.output_ids[j]))
            .collect()
    }
}

fn total(scores: &Matrix, col_of_row: &[usize]) -> f64 {
    col_of_row
        .iter()
        .enumerate()
        .map(|(i, &j)| scores[(i, j)])
        .sum()
}

/// Optimal assignment by the O(n³) shortest-augmenting-path form of the
/// Hungarian method with row and column potentials.
pub fn hungarian_assign(scores: &Matrix, sense: Sense) -> Result<Assignment> {
    let n = scores.rows();
    if n != scores.cols() {
        return Err(Error::NotSquare {
            op: "hungarian_assign",
            rows: scores.rows(),
            cols: scores.cols(),
        });
    }
    if n == 0 {
        return Ok(Assignment {
            col_of_row: Vec::new(),
            total_score: 0.0,
        });
    }
    let cost = |i: usize, j: usize| match sense {
        Sense::Minimize => scores[(i, j)],
        Sense::Maximize => -scores[(i, j)],
    };

    // 1-based internally; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    let total_score = total(scores, &col_of_row);
    Ok(Assignment {
        col_of_row,
        total_score,
    })
}

/// Rows in descending order of their best score each take their best still
/// unused column. Not optimal in general.
pub fn greedy_assign(scores: &Matrix) -> Result<Assignment> {
    let n = scores.rows();
    if n != scores.cols() {
        return Err(Error::NotSquare {
            op: "greedy_assign",
            rows: scores.rows(),
            cols: scores.cols(),
        });
    }
    let row_max: Vec<f64> = (0..n)
        .map(|i| scores.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&a, &b| row_max[b].total_cmp(&row_max[a]).then(a.cmp(&b)));
    let mut taken = vec![false; n];
    let mut col_of_row = vec![0usize; n];
    for i in rows {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if taken[j] {
                continue;
            }
            if best.is_none_or(|b| scores[(i, j)] > scores[(i, b)]) {
                best = Some(j);
            }
        }
        let j = best.expect("a free column remains for every row");
        taken[j] = true;
        col_of_row[i] = j;
    }
    let total_score = total(scores, &col_of_row);
    Ok(Assignment {
        col_of_row,
        total_score,
    })
}

/// How cleanly matched scores separate from the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    /// `(input id, output id, score)` in input-piece order.
    pub pairs: Vec<(PieceId, PieceId, f64)>,
    pub min_matched: f64,
    pub max_unmatched: f64,
    /// `min_matched - max_unmatched`; positive means complete separation.
    pub gap: f64,
    pub total_score: f64,
    pub greedy_agrees: bool,
}

/// Scores all candidates, assigns with the Hungarian method and builds the
/// blocks in input-piece order.
pub fn pair_blocks(
    inputs: &[Piece],
    outputs: &[Piece],
) -> Result<(Vec<PairedBlock>, SeparationReport)> {
    let dm = dominance_matrix(inputs, outputs)?;
    let assignment = hungarian_assign(&dm.scores, Sense::Maximize)?;
    let greedy = greedy_assign(&dm.scores)?;
    let report = separation(&dm, &assignment, greedy.col_of_row == assignment.col_of_row);
    let blocks = assignment
        .col_of_row
        .iter()
        .enumerate()
        .map(|(i, &j)| PairedBlock::new(inputs[i].clone(), outputs[j].clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((blocks, report))
}

fn separation(dm: &DominanceMatrix, a: &Assignment, greedy_agrees: bool) -> SeparationReport {
    let n = dm.scores.rows();
    let mut min_matched = f64::INFINITY;
    let mut max_unmatched = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let s = dm.scores[(i, j)];
            if a.col_of_row[i] == j {
                min_matched = min_matched.min(s);
            } else {
                max_unmatched = max_unmatched.max(s);
            }
        }
    }
    if n == 1 {
        max_unmatched = 0.0;
    }
    SeparationReport {
        pairs: a
            .col_of_row
            .iter()
            .enumerate()
            .map(|(i, &j)| (dm.input_ids[i], dm.output_ids[j], dm.scores[(i, j)]))
            .collect(),
        min_matched,
        max_unmatched,
        gap: min_matched - max_unmatched,
        total_score: a.total_score,
        greedy_agrees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    /// Exhaustive search over all n! permutations (Heap's algorithm).
    fn brute_force_max(scores: &Matrix) -> f64 {
        let n = scores.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut c = vec![0usize; n];
        let mut best = total(scores, &perm);
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.max(total(scores, &perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best
    }

    #[test]
    fn pure_negative_diagonal_attains_sqrt_d() {
        // w_out · w_in = -εI with w_in = [I; 0] and w_out = [-εI, 0].
        let eps = 0.01;
        let w_in = Matrix::from_fn(96, 48, |i, j| if i == j { 1.0 } else { 0.0 });
        let w_out = Matrix::from_fn(48, 96, |i, j| if i == j { -eps } else { 0.0 });
        assert_relative_eq!(
            dominance_ratio(&w_out, &w_in).unwrap(),
            48f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn hollow_product_scores_zero() {
        // Product is a cyclic shift: zero diagonal.
        let w_in = Matrix::from_fn(96, 48, |i, j| if i == (j + 1) % 48 { 1.0 } else { 0.0 });
        let w_out = Matrix::from_fn(48, 96, |i, j| if i == j { 1.0 } else { 0.0 });
        assert_eq!(dominance_ratio(&w_out, &w_in).unwrap(), 0.0);
        assert_eq!(dominance_ratio(&Matrix::zeros(48, 96), &w_in).unwrap(), 0.0);
    }

    #[test]
    fn dominance_ratio_rejects_bad_shapes() {
        assert!(dominance_ratio(&Matrix::zeros(48, 96), &Matrix::zeros(48, 96)).is_err());
    }

    #[test]
    fn hungarian_on_diagonal_toy() {
        let s = table(&[&[9.0, 1.0, 1.0], &[1.0, 9.0, 1.0], &[1.0, 1.0, 9.0]]);
        let a = hungarian_assign(&s, Sense::Maximize).unwrap();
        assert_eq!(a.col_of_row, vec![0, 1, 2]);
        assert_eq!(a.total_score, 27.0);
        let g = greedy_assign(&s).unwrap();
        assert_eq!(g.col_of_row, vec![0, 1, 2]);
    }

    #[test]
    fn hungarian_minimize_sense() {
        let s = table(&[&[4.0, 1.0, 3.0], &[2.0, 0.0, 5.0], &[3.0, 2.0, 2.0]]);
        let a = hungarian_assign(&s, Sense::Minimize).unwrap();
        assert_eq!(a.total_score, 5.0);
    }

    #[test]
    fn hungarian_rejects_non_square() {
        assert!(matches!(
            hungarian_assign(&Matrix::zeros(2, 3), Sense::Maximize),
            Err(Error::NotSquare { .. })
        ));
        assert!(greedy_assign(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        let s = table(&[&[2.0, 1.0], &[2.0, 0.0]]);
        let g = greedy_assign(&s).unwrap();
        let h = hungarian_assign(&s, Sense::Maximize).unwrap();
        assert_eq!(g.col_of_row, vec![0, 1]);
        assert_eq!(g.total_score, 2.0);
        assert_eq!(h.col_of_row, vec![1, 0]);
        assert_eq!(h.total_score, 3.0);
    }

    #[test]
    fn hungarian_matches_brute_force_and_beats_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..1000 {
            let n = 1 + trial % 8;
            let s = Matrix::from_fn(n, n, |_, _| rng.random_range(0.0..10.0));
            let h = hungarian_assign(&s, Sense::Maximize).unwrap();
            let mut seen = h.col_of_row.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            let best = brute_force_max(&s);
            assert!((h.total_score - best).abs() <= 1e-9, "trial {trial}");
            let g = greedy_assign(&s).unwrap();
            assert!(h.total_score >= g.total_score - 1e-12);
        }
    }

    #[test]
    fn separation_report_on_toy_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Blocks whose products are -I plus noise; the pairing is a shuffle.
        let n = 6;
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for k in 0..n {
            let w_in = Matrix::from_fn(96, 48, |_, _| rng.random_range(-1.0..1.0));
            // w_out = -(w_inᵀ w_in)⁻¹ w_inᵀ is awkward; use w_out = -w_inᵀ / 96,
            // whose product has a strongly negative diagonal.
            let w_out = w_in.transpose().scale(-1.0 / 96.0);
            inputs.push(Piece::new(PieceId(2 * k), w_in, crate::Vector::zeros(96)).unwrap());
            outputs.push(Piece::new(PieceId(2 * k + 1), w_out, crate::Vector::zeros(48)).unwrap());
        }
        outputs.rotate_left(2);
        let (blocks, report) = pair_blocks(&inputs, &outputs).unwrap();
        for b in &blocks {
            assert_eq!(b.output().id().0, b.input().id().0 + 1);
        }
        assert!(report.gap > 0.0);
        assert!(report.greedy_agrees);
        for &(_, _, s) in &report.pairs {
            assert!(s >= report.max_unmatched);
        }
        let dm = dominance_matrix(&inputs, &outputs).unwrap();
        for i in 0..n as usize {
            for j in 0..n as usize {
                let s = dominance_ratio(outputs[j].weight(), inputs[i].weight()).unwrap();
                assert_eq!(dm.scores[(i, j)], s);
            }
        }
        // A simultaneous shuffle of both lists permutes the table the same way.
        let mut inputs2 = inputs.clone();
        let mut outputs2 = outputs.clone();
        inputs2.reverse();
        outputs2.reverse();
        let dm2 = dominance_matrix(&inputs2, &outputs2).unwrap();
        for i in 0..n as usize {
            for j in 0..n as usize {
                assert_eq!(dm2.scores[(i, j)], dm.scores[(n as usize - 1 - i, n as usize - 1 - j)]);
            }
        }
    }

    #[test]
    fn dominance_matrix_checks_census() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = crate::model::tests::random_piece(&mut rng, 0, 96, 48, 0.1);
        assert!(matches!(
            dominance_matrix(&[p.clone()], &[p]),
            Err(Error::Census { .. })
        ));
    }
}
