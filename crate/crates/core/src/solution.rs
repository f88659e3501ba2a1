use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Network, PairedBlock, Piece, PieceId, PieceKind};

/// A full reassembly: which pieces pair up, in which order the pairs run,
/// and which piece is the readout.
///
/// The flat view lists `[in, out]` for every block in running order and then
/// the readout id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    /// `(input id, output id)` per block.
    pub pairs: Vec<(PieceId, PieceId)>,
    /// Running order as indices into `pairs`.
    pub order: Vec<usize>,
    pub last_id: PieceId,
}

impl Solution {
    pub fn flat(&self) -> Vec<PieceId> {
        self.order
            .iter()
            .flat_map(|&k| [self.pairs[k].0, self.pairs[k].1])
            .chain([self.last_id])
            .collect()
    }

    /// Rebuilds a solution from its flat view; pairs come out in running
    /// order, so `order` is the identity.
    pub fn from_flat(flat: &[PieceId]) -> Result<Self> {
        if flat.len() < 3 || flat.len() % 2 == 0 {
            return Err(Error::Solution("flat list must hold 2k + 1 ids"));
        }
        let blocks = flat.len() / 2;
        let pairs = (0..blocks).map(|k| (flat[2 * k], flat[2 * k + 1])).collect();
        let sol = Solution {
            pairs,
            order: (0..blocks).collect(),
            last_id: flat[flat.len() - 1],
        };
        sol.validate()?;
        Ok(sol)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Solution("no pairs"));
        }
        crate::ordering::check_permutation(&self.order, self.pairs.len())
            .map_err(|_| Error::Solution("order is not a permutation of the pairs"))?;
        let mut ids = self.flat();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Solution("piece ids repeat"));
        }
        Ok(())
    }

    /// Structural equality on the flat view.
    pub fn same_assembly(&self, other: &Solution) -> bool {
        self.flat() == other.flat()
    }

    /// Looks the ids up in `pieces` and builds the network they describe.
    pub fn assemble(&self, pieces: &[Piece]) -> Result<Network> {
        self.validate()?;
        let find = |id: PieceId| -> Result<&Piece> {
            pieces
                .iter()
                .find(|p| p.id() == id)
                .ok_or(Error::UnknownId(id))
        };
        let mut blocks = Vec::with_capacity(self.pairs.len());
        for &k in &self.order {
            let (i, o) = self.pairs[k];
            blocks.push(PairedBlock::new(find(i)?.clone(), find(o)?.clone())?);
        }
        let last = find(self.last_id)?;
        if last.kind() != PieceKind::Last {
            return Err(Error::Solution("last_id does not name a (1, 48) piece"));
        }
        Network::new(blocks, last.clone())
    }
}
