use alloc::vec::Vec;

use super::Ordering;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, Dataset, PairedBlock, PieceId, ROW_CHUNK};
use crate::IN_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStrategy {
    /// Ascending mean residual norm on the raw inputs.
    DeltaNorm,
    /// Ascending Frobenius norm of the output projection; needs no data.
    FrobeniusOut,
}

/// Mean over dataset rows of `‖r_k(x)‖₂` for every block, with each block
/// applied to the raw inputs rather than to propagated states.
pub fn delta_norms(blocks: &[PairedBlock], ds: &Dataset) -> Vec<f64> {
    let n = ds.len();
    let mut hidden = Vec::new();
    let mut out = Vec::new();
    blocks
        .iter()
        .map(|b| {
            let mut total = 0.0;
            for start in (0..n).step_by(ROW_CHUNK) {
                let rows = ROW_CHUNK.min(n - start);
                let x = &ds.x().as_slice()[start * IN_DIM..(start + rows) * IN_DIM];
                out.resize(rows * IN_DIM, 0.0);
                model::residual_rows(b, x, rows, &mut out, &mut hidden);
                total += out
                    .chunks_exact(IN_DIM)
                    .map(|r| libm::sqrt(linalg::dot(r, r)))
                    .sum::<f64>();
            }
            total / n as f64
        })
        .collect()
}

pub fn seed_order(
    blocks: &[PairedBlock],
    last_id: PieceId,
    strategy: SeedStrategy,
    ds: Option<&Dataset>,
) -> Result<Ordering> {
    let stat: Vec<f64> = match strategy {
        SeedStrategy::DeltaNorm => delta_norms(blocks, ds.ok_or(Error::MissingDataset)?),
        SeedStrategy::FrobeniusOut => blocks
            .iter()
            .map(|b| linalg::frobenius_norm(b.output().weight()))
            .collect(),
    };
    Ok(Ordering {
        sequence: ascending(&stat),
        last_id,
    })
}

/// Indices sorted by ascending value, ties by index.
fn ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, Vector};
    use crate::model::Piece;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn block_with(b_in: f64, b_out: Vec<f64>, w_scale: f64, id: u32) -> PairedBlock {
        let w_in = Matrix::from_fn(96, 48, |i, j| w_scale * (((i * 7 + j * 3) % 11) as f64 - 5.0));
        let w_out = Matrix::from_fn(48, 96, |i, j| w_scale * (((i * 5 + j) % 13) as f64 - 6.0));
        PairedBlock::new(
            Piece::new(PieceId(id), w_in, Vector::new(vec![b_in; 96]).unwrap()).unwrap(),
            Piece::new(PieceId(id + 1), w_out, Vector::new(b_out).unwrap()).unwrap(),
        )
        .unwrap()
    }

    fn dataset() -> Dataset {
        let (_, ds) = super::super::tests::toy_instance(3, 1, 300);
        ds
    }

    #[test]
    fn zero_block_delta_is_bias_norm() {
        let ds = dataset();
        let zero = block_with(0.0, vec![0.0; 48], 0.0, 0);
        let mut bias = vec![0.0; 48];
        bias[0] = 3.0;
        bias[1] = 4.0;
        let biased = block_with(0.0, bias.clone(), 0.0, 2);
        let gated = block_with(-1e6, bias, 0.01, 4);
        let d = delta_norms(&[zero, biased, gated], &ds);
        assert_eq!(d[0], 0.0);
        assert_relative_eq!(d[1], 5.0, epsilon = 1e-12);
        assert_relative_eq!(d[2], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn seeds_sort_ascending_with_index_ties() {
        let ds = dataset();
        let blocks = vec![
            block_with(0.0, vec![0.0; 48], 0.02, 0),
            block_with(0.0, vec![0.0; 48], 0.0, 2),
            block_with(0.0, vec![0.0; 48], 0.01, 4),
            block_with(0.0, vec![0.0; 48], 0.0, 6),
        ];
        let by_delta = seed_order(&blocks, PieceId(99), SeedStrategy::DeltaNorm, Some(&ds)).unwrap();
        assert_eq!(by_delta.sequence, vec![1, 3, 2, 0]);
        let by_frob = seed_order(&blocks, PieceId(99), SeedStrategy::FrobeniusOut, None).unwrap();
        assert_eq!(by_frob.sequence, vec![1, 3, 2, 0]);
        assert!(matches!(
            seed_order(&blocks, PieceId(99), SeedStrategy::DeltaNorm, None),
            Err(Error::MissingDataset)
        ));
    }
}
