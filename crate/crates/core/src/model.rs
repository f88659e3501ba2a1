//! Pieces, residual blocks, assembled networks and the MSE objective.
//!
//! A block maps `x ↦ x + W_out · relu(W_in · x + b_in) + b_out`; a network
//! chains its blocks in order and finishes with a `1 x 48` affine layer.
//! Public evaluation is row-wise; the batched row kernels used by the
//! trainer and the ordering search are crate-internal.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::{HIDDEN_DIM, IN_DIM};

/// Rows pushed through the network per batch.
pub(crate) const ROW_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PieceId(pub u32);

impl fmt::Display for PieceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for PieceId {
    fn from(v: u32) -> Self {
        PieceId(v)
    }
}

/// Role of a piece, determined entirely by its weight shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    /// `(96, 48)`: first layer of a residual branch.
    Input,
    /// `(48, 96)`: second layer of a residual branch.
    Output,
    /// `(1, 48)`: the scalar readout.
    Last,
}

impl PieceKind {
    pub fn from_shape(rows: usize, cols: usize) -> Option<Self> {
        match (rows, cols) {
            (HIDDEN_DIM, IN_DIM) => Some(PieceKind::Input),
            (IN_DIM, HIDDEN_DIM) => Some(PieceKind::Output),
            (1, IN_DIM) => Some(PieceKind::Last),
            _ => None,
        }
    }
}

/// One unlabeled linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    id: PieceId,
    kind: PieceKind,
    weight: Matrix,
    bias: Vector,
}

impl Piece {
    pub fn new(id: PieceId, weight: Matrix, bias: Vector) -> Result<Self> {
        let (rows, cols) = weight.shape();
        let kind = PieceKind::from_shape(rows, cols).ok_or(Error::PieceShape { id, rows, cols })?;
        if bias.len() != rows {
            return Err(Error::BiasLength {
                id,
                rows,
                bias_len: bias.len(),
            });
        }
        Ok(Self {
            id,
            kind,
            weight,
            bias,
        })
    }

    #[inline]
    pub fn id(&self) -> PieceId {
        self.id
    }

    #[inline]
    pub fn kind(&self) -> PieceKind {
        self.kind
    }

    #[inline]
    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    #[inline]
    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    /// Same values under a different id.
    pub fn with_id(&self, id: PieceId) -> Piece {
        Piece { id, ..self.clone() }
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weight.as_mut_slice(), self.bias.as_mut_slice())
    }
}

/// An input projection matched with an output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedBlock {
    input: Piece,
    output: Piece,
}

impl PairedBlock {
    pub fn new(input: Piece, output: Piece) -> Result<Self> {
        if input.kind() != PieceKind::Input {
            let (rows, cols) = input.weight().shape();
            return Err(Error::PieceShape {
                id: input.id(),
                rows,
                cols,
            });
        }
        if output.kind() != PieceKind::Output {
            let (rows, cols) = output.weight().shape();
            return Err(Error::PieceShape {
                id: output.id(),
                rows,
                cols,
            });
        }
        if input.id() == output.id() {
            return Err(Error::DuplicateId(input.id()));
        }
        Ok(Self { input, output })
    }

    #[inline]
    pub fn input(&self) -> &Piece {
        &self.input
    }

    #[inline]
    pub fn output(&self) -> &Piece {
        &self.output
    }

    pub(crate) fn pieces_mut(&mut self) -> (&mut Piece, &mut Piece) {
        (&mut self.input, &mut self.output)
    }

    /// `W_out · W_in`, the 48 x 48 product whose diagonal drives pairing.
    pub fn weight_product(&self) -> Matrix {
        linalg::matmul(self.output.weight(), self.input.weight())
            .expect("paired block shapes are validated")
    }

    /// The residual branch `r(x)` alone.
    pub fn residual(&self, x: &Vector) -> Result<Vector> {
        check_len(x)?;
        let mut out = vec![0.0; IN_DIM];
        let mut scratch = Vec::new();
        residual_rows(self, x.as_slice(), 1, &mut out, &mut scratch);
        Ok(Vector::new(out)?)
    }
}

/// Blocks in evaluation order followed by the readout layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    blocks: Vec<PairedBlock>,
    last: Piece,
}

impl Network {
    pub fn new(blocks: Vec<PairedBlock>, last: Piece) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("a network needs at least one block"));
        }
        if last.kind() != PieceKind::Last {
            let (rows, cols) = last.weight().shape();
            return Err(Error::PieceShape {
                id: last.id(),
                rows,
                cols,
            });
        }
        let mut ids: Vec<PieceId> = blocks
            .iter()
            .flat_map(|b| [b.input().id(), b.output().id()])
            .chain([last.id()])
            .collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0]));
        }
        Ok(Self { blocks, last })
    }

    #[inline]
    pub fn blocks(&self) -> &[PairedBlock] {
        &self.blocks
    }

    #[inline]
    pub fn last(&self) -> &Piece {
        &self.last
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [PairedBlock], &mut Piece) {
        (&mut self.blocks, &mut self.last)
    }

    /// The same blocks composed in `order` (indices into [`Self::blocks`]).
    pub fn reordered(&self, order: &[usize]) -> Result<Network> {
        crate::ordering::check_permutation(order, self.blocks.len())?;
        Network::new(
            order.iter().map(|&k| self.blocks[k].clone()).collect(),
            self.last.clone(),
        )
    }

    /// Scalar outputs for `n` rows of a row-major `n x 48` batch.
    pub fn forward_rows(&self, x: &[f64], n: usize) -> Vec<f64> {
        let refs: Vec<&PairedBlock> = self.blocks.iter().collect();
        forward_rows_with(&refs, &self.last, x, n)
    }
}

/// Pieces sorted by role. A valid census has as many input as output
/// projections and exactly one readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    pub inputs: Vec<Piece>,
    pub outputs: Vec<Piece>,
    pub last: Piece,
}

impl Census {
    /// Splits pieces by shape. Ids must be distinct; within each role the
    /// pieces keep their incoming order.
    pub fn from_pieces(pieces: Vec<Piece>) -> Result<Self> {
        let mut ids: Vec<PieceId> = pieces.iter().map(Piece::id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0]));
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut lasts = Vec::new();
        for p in pieces {
            match p.kind() {
                PieceKind::Input => inputs.push(p),
                PieceKind::Output => outputs.push(p),
                PieceKind::Last => lasts.push(p),
            }
        }
        if inputs.is_empty() || inputs.len() != outputs.len() || lasts.len() != 1 {
            let expected = inputs.len().max(outputs.len()).max(1);
            return Err(Error::Census {
                expected_in: expected,
                expected_out: expected,
                inputs: inputs.len(),
                outputs: outputs.len(),
                lasts: lasts.len(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            last: lasts.pop().expect("exactly one"),
        })
    }

    pub fn blocks(&self) -> usize {
        self.inputs.len()
    }
}

/// Which recorded column a prediction is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// The original model's recorded outputs.
    Pred,
    /// The regression targets.
    Truth,
}

/// `N` rows of 48 features with the original model's output and the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    pred: Vec<f64>,
    truth: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, pred: Vec<f64>, truth: Vec<f64>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Dataset("at least one row is required"));
        }
        if x.cols() != IN_DIM {
            return Err(Error::Dataset("inputs must have 48 columns"));
        }
        if pred.len() != x.rows() || truth.len() != x.rows() {
            return Err(Error::Dataset("pred and truth must have one value per row"));
        }
        if pred.iter().chain(&truth).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset targets"));
        }
        Ok(Self { x, pred, truth })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    #[inline]
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn pred(&self) -> &[f64] {
        &self.pred
    }

    #[inline]
    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn target(&self, target: Target) -> &[f64] {
        match target {
            Target::Pred => &self.pred,
            Target::Truth => &self.truth,
        }
    }

    pub fn row(&self, i: usize) -> Vector {
        Vector::new(self.x.row(i).to_vec()).expect("dataset entries are finite")
    }

    /// Replaces the `pred` column.
    pub fn with_pred(mut self, pred: Vec<f64>) -> Result<Self> {
        if pred.len() != self.len() {
            return Err(Error::Dataset("pred must have one value per row"));
        }
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pred column"));
        }
        self.pred = pred;
        Ok(self)
    }

    /// The first `n` rows as a row-major slice.
    pub(crate) fn x_prefix(&self, n: usize) -> &[f64] {
        &self.x.as_slice()[..n * IN_DIM]
    }
}

fn check_len(x: &Vector) -> Result<()> {
    if x.len() != IN_DIM {
        return Err(Error::DimensionMismatch {
            op: "forward",
            left_rows: IN_DIM,
            left_cols: 1,
            right_rows: x.len(),
            right_cols: 1,
        });
    }
    Ok(())
}

pub fn block_forward(block: &PairedBlock, x: &Vector) -> Result<Vector> {
    check_len(x)?;
    let mut state = x.as_slice().to_vec();
    let mut scratch = Vec::new();
    apply_block_rows(block, &mut state, 1, &mut scratch);
    Vector::new(state)
}

pub fn network_forward(net: &Network, x: &Vector) -> Result<f64> {
    check_len(x)?;
    Ok(net.forward_rows(x.as_slice(), 1)[0])
}

/// Mean squared error of the network over the first `n_points` rows.
pub fn mse(net: &Network, ds: &Dataset, n_points: usize, target: Target) -> Result<f64> {
    if n_points == 0 || n_points > ds.len() {
        return Err(Error::RowRange {
            requested: n_points,
            available: ds.len(),
        });
    }
    let out = net.forward_rows(ds.x_prefix(n_points), n_points);
    Ok(mean_squared_error(&out, &ds.target(target)[..n_points]))
}

/// Fraction of (row, hidden unit) pairs with a strictly positive pre-activation.
pub fn relu_active_fraction(block: &PairedBlock, ds: &Dataset) -> f64 {
    let n = ds.len();
    let mut hidden = Vec::new();
    let mut active = 0usize;
    for start in (0..n).step_by(ROW_CHUNK) {
        let rows = ROW_CHUNK.min(n - start);
        let x = &ds.x().as_slice()[start * IN_DIM..(start + rows) * IN_DIM];
        hidden.resize(rows * HIDDEN_DIM, 0.0);
        linalg::affine_rows(
            x,
            rows,
            block.input().weight(),
            block.input().bias().as_slice(),
            &mut hidden,
        );
        active += hidden.iter().filter(|&&v| v > 0.0).count();
    }
    active as f64 / (n * HIDDEN_DIM) as f64
}

/// Sequential (row order) mean of squared differences.
pub(crate) fn mean_squared_error(out: &[f64], target: &[f64]) -> f64 {
    sum_squared_error(out, target) / out.len() as f64
}

pub(crate) fn sum_squared_error(out: &[f64], target: &[f64]) -> f64 {
    out.iter()
        .zip(target)
        .map(|(o, t)| (o - t) * (o - t))
        .fold(0.0, |acc, e| acc + e)
}

/// Writes `r(x)` for each row of `states` into `out` (both `n x 48`).
pub(crate) fn residual_rows(
    block: &PairedBlock,
    states: &[f64],
    n: usize,
    out: &mut [f64],
    hidden: &mut Vec<f64>,
) {
    hidden.resize(n * HIDDEN_DIM, 0.0);
    linalg::affine_rows(
        states,
        n,
        block.input().weight(),
        block.input().bias().as_slice(),
        hidden,
    );
    for v in hidden.iter_mut() {
        *v = v.max(0.0);
    }
    linalg::affine_rows(
        hidden,
        n,
        block.output().weight(),
        block.output().bias().as_slice(),
        out,
    );
}

/// In place `states ← states + r(states)` for an `n x 48` batch.
pub(crate) fn apply_block_rows(
    block: &PairedBlock,
    states: &mut [f64],
    n: usize,
    hidden: &mut Vec<f64>,
) {
    hidden.resize(n * HIDDEN_DIM, 0.0);
    linalg::affine_rows(
        states,
        n,
        block.input().weight(),
        block.input().bias().as_slice(),
        hidden,
    );
    for v in hidden.iter_mut() {
        *v = v.max(0.0);
    }
    let b_out = block.output().bias().as_slice();
    for row in states.chunks_exact_mut(IN_DIM) {
        for (s, b) in row.iter_mut().zip(b_out) {
            *s += b;
        }
    }
    // states += hidden · W_outᵀ
    linalg::gemm(
        n,
        HIDDEN_DIM,
        IN_DIM,
        hidden,
        (HIDDEN_DIM as isize, 1),
        block.output().weight().as_slice(),
        (1, HIDDEN_DIM as isize),
        1.0,
        states,
    );
}

/// Readout for each row of an `n x 48` batch.
pub(crate) fn readout_rows(last: &Piece, states: &[f64], out: &mut Vec<f64>) {
    let w = last.weight().row(0);
    let b = last.bias()[0];
    out.clear();
    out.extend(states.chunks_exact(IN_DIM).map(|s| linalg::dot(w, s) + b));
}

/// Scalar outputs of `blocks` then `last` over `n` rows, chunked.
pub(crate) fn forward_rows_with(
    blocks: &[&PairedBlock],
    last: &Piece,
    x: &[f64],
    n: usize,
) -> Vec<f64> {
    let mut outputs = Vec::with_capacity(n);
    let mut hidden = Vec::new();
    let mut chunk_out = Vec::new();
    let mut states = Vec::with_capacity(ROW_CHUNK * IN_DIM);
    for start in (0..n).step_by(ROW_CHUNK) {
        let rows = ROW_CHUNK.min(n - start);
        states.clear();
        states.extend_from_slice(&x[start * IN_DIM..(start + rows) * IN_DIM]);
        for block in blocks {
            apply_block_rows(block, &mut states, rows, &mut hidden);
        }
        readout_rows(last, &states, &mut chunk_out);
        outputs.extend_from_slice(&chunk_out);
    }
    outputs
}
