use alloc::vec::Vec;

use super::eval::Evaluator;
use super::{check_permutation, Ordering};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Dataset, PairedBlock, Piece};

/// MSE change caused by exchanging two blocks in a seed ordering.
///
/// `gap(a, b) = L(seed with a and b swapped) - L(seed)`, which is symmetric
/// in `a` and `b`. Its sign only becomes a precedence statement relative to
/// where the seed put the two blocks; [`GapMatrix::margin`] applies that
/// orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMatrix {
    gaps: Matrix,
    seed_positions: Vec<usize>,
    /// Rows of the dataset prefix used for every comparison.
    pub n_cmp: usize,
    /// MSE of the unmodified seed on the same prefix.
    pub seed_mse: f64,
}

impl GapMatrix {
    /// Builds a gap table directly; `gaps` must be square, symmetric and
    /// zero on the diagonal.
    pub fn from_parts(gaps: Matrix, seed: &Ordering, n_cmp: usize, seed_mse: f64) -> Result<Self> {
        let n = gaps.rows();
        if gaps.cols() != n {
            return Err(Error::NotSquare {
                op: "GapMatrix",
                rows: n,
                cols: gaps.cols(),
            });
        }
        check_permutation(&seed.sequence, n)?;
        for a in 0..n {
            if gaps[(a, a)] != 0.0 {
                return Err(Error::Ordering("gap table diagonal must be zero"));
            }
            for b in 0..a {
                if gaps[(a, b)] != gaps[(b, a)] {
                    return Err(Error::Ordering("gap table must be symmetric"));
                }
            }
        }
        Ok(Self {
            gaps,
            seed_positions: seed.positions(),
            n_cmp,
            seed_mse,
        })
    }

    pub fn len(&self) -> usize {
        self.gaps.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.rows() == 0
    }

    #[inline]
    pub fn gap(&self, a: usize, b: usize) -> f64 {
        self.gaps[(a, b)]
    }

    pub fn table(&self) -> &Matrix {
        &self.gaps
    }

    /// Positive when the evidence says block `a` runs before block `b`.
    ///
    /// A positive gap means the swap hurt, so the seed's relative order of
    /// the two blocks is confirmed; a negative gap reverses it.
    #[inline]
    pub fn margin(&self, a: usize, b: usize) -> f64 {
        let g = self.gaps[(a, b)];
        if self.seed_positions[a] < self.seed_positions[b] {
            g
        } else {
            -g
        }
    }
}

/// Evaluates every pairwise swap of `seed` on the first `n_cmp` rows.
pub fn swap_gap_matrix(
    seed: &Ordering,
    blocks: &[PairedBlock],
    last: &Piece,
    ds: &Dataset,
    n_cmp: usize,
) -> Result<GapMatrix> {
    check_permutation(&seed.sequence, blocks.len())?;
    if n_cmp == 0 || n_cmp > ds.len() {
        return Err(Error::RowRange {
            requested: n_cmp,
            available: ds.len(),
        });
    }
    let eval = Evaluator::new(blocks, last, ds, n_cmp);
    let seq = &seed.sequence;
    let n = seq.len();
    let seed_mse = eval.mse(seq);
    let states = eval.prefix_states(seq);
    let rows = eval.rows() as f64;

    let row_of_gaps = |p: usize| -> Vec<(usize, usize, f64)> {
        let mut swapped = seq.clone();
        (p + 1..n)
            .map(|q| {
                swapped.swap(p, q);
                let sse = eval
                    .sse_from(&states[p], &swapped[p..], f64::INFINITY)
                    .expect("no abort threshold");
                swapped.swap(p, q);
                (seq[p], seq[q], sse / rows - seed_mse)
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let entries: Vec<Vec<(usize, usize, f64)>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row_of_gaps).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let entries: Vec<Vec<(usize, usize, f64)>> = (0..n).map(row_of_gaps).collect();

    let mut gaps = Matrix::zeros(n, n);
    for (a, b, g) in entries.into_iter().flatten() {
        gaps[(a, b)] = g;
        gaps[(b, a)] = g;
    }
    Ok(GapMatrix {
        gaps,
        seed_positions: seed.positions(),
        n_cmp,
        seed_mse,
    })
}

/// Directed 3-cycles in the precedence relation `a ≺ b ⇔ margin(a, b) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitivity {
    /// Ordered chains `a ≺ b ≺ c` whose closing relation points back
    /// (`c ≺ a`). Every 3-cycle contributes its three rotations.
    pub violations: usize,
    /// Unordered triples examined, `C(n, 3)`.
    pub triples: usize,
    /// Each cycle once, as `[a, b, c]` with `a ≺ b ≺ c ≺ a` and `a` the
    /// smallest index.
    pub cycles: Vec<[usize; 3]>,
}

impl Transitivity {
    pub fn rate(&self) -> f64 {
        if self.triples == 0 {
            0.0
        } else {
            self.violations as f64 / self.triples as f64
        }
    }
}

pub fn count_transitivity_violations(gaps: &GapMatrix) -> Transitivity {
    let n = gaps.len();
    let before = |a: usize, b: usize| gaps.margin(a, b) > 0.0;
    let mut cycles = Vec::new();
    let mut triples = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                triples += 1;
                if before(i, j) && before(j, k) && before(k, i) {
                    cycles.push([i, j, k]);
                } else if before(i, k) && before(k, j) && before(j, i) {
                    cycles.push([i, k, j]);
                }
            }
        }
    }
    Transitivity {
        violations: 3 * cycles.len(),
        triples,
        cycles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PieceId;
    use crate::ordering::tests::toy_instance;
    use crate::ordering::ordering_mse;
    use alloc::vec;

    fn oriented(margins: &[(usize, usize, f64)], n: usize) -> GapMatrix {
        // With the identity seed, margin(a, b) = gap(a, b) for a < b.
        let mut m = Matrix::zeros(n, n);
        for &(a, b, g) in margins {
            let (lo, hi, g) = if a < b { (a, b, g) } else { (b, a, -g) };
            m[(lo, hi)] = g;
            m[(hi, lo)] = g;
        }
        GapMatrix::from_parts(m, &Ordering::identity(n, PieceId(0)), 1, 0.0).unwrap()
    }

    #[test]
    fn rock_paper_scissors_is_one_cycle() {
        let g = oriented(&[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)], 3);
        let t = count_transitivity_violations(&g);
        assert_eq!(t.cycles, vec![[0, 1, 2]]);
        assert_eq!(t.violations, 3);
        assert_eq!(t.triples, 1);
        let rev = oriented(&[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)], 3);
        assert_eq!(count_transitivity_violations(&rev).cycles, vec![[0, 2, 1]]);
    }

    #[test]
    fn transitive_gaps_have_no_cycles() {
        let n = 8;
        let margins: Vec<_> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b, (b - a) as f64)))
            .collect();
        let t = count_transitivity_violations(&oriented(&margins, n));
        assert_eq!(t.violations, 0);
        assert_eq!(t.triples, 56);
    }

    #[test]
    fn from_parts_validates() {
        let seed = Ordering::identity(2, PieceId(0));
        let asym = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 0.0]]).unwrap();
        assert!(GapMatrix::from_parts(asym, &seed, 1, 0.0).is_err());
        let diag = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert!(GapMatrix::from_parts(diag, &seed, 1, 0.0).is_err());
    }

    #[test]
    fn swap_gaps_match_direct_evaluation() {
        let (net, ds) = toy_instance(11, 6, 600);
        let seed = Ordering::new(vec![2, 0, 1, 3, 5, 4], net.last().id()).unwrap();
        let g = swap_gap_matrix(&seed, net.blocks(), net.last(), &ds, 500).unwrap();
        let base = ordering_mse(&seed, net.blocks(), net.last(), &ds, 500).unwrap();
        assert_eq!(g.seed_mse, base);
        for p in 0..6 {
            assert_eq!(g.gap(seed.sequence[p], seed.sequence[p]), 0.0);
            for q in p + 1..6 {
                let mut s = seed.clone();
                s.sequence.swap(p, q);
                let direct = ordering_mse(&s, net.blocks(), net.last(), &ds, 500).unwrap() - base;
                let (a, b) = (seed.sequence[p], seed.sequence[q]);
                assert!((g.gap(a, b) - direct).abs() < 1e-15);
                assert_eq!(g.gap(a, b), g.gap(b, a));
            }
        }
    }

    #[test]
    fn duplicate_blocks_have_zero_gap() {
        let (net, ds) = toy_instance(12, 3, 300);
        let b = &net.blocks()[1];
        let twin = PairedBlock::new(b.input().with_id(PieceId(50)), b.output().with_id(PieceId(51))).unwrap();
        let blocks = vec![net.blocks()[0].clone(), b.clone(), twin, net.blocks()[2].clone()];
        let seed = Ordering::identity(4, net.last().id());
        let g = swap_gap_matrix(&seed, &blocks, net.last(), &ds, 300).unwrap();
        assert_eq!(g.gap(1, 2), 0.0);
    }

    #[test]
    fn n_cmp_is_range_checked() {
        let (net, ds) = toy_instance(13, 2, 10);
        let seed = Ordering::identity(2, net.last().id());
        assert!(swap_gap_matrix(&seed, net.blocks(), net.last(), &ds, 11).is_err());
        assert!(swap_gap_matrix(&seed, net.blocks(), net.last(), &ds, 0).is_err());
    }
}
