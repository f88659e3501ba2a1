//! Puzzle instances from scratch: a synthetic regression task, a residual
//! MLP trained on it with hand-written backprop and Adam, and the shuffle
//! that breaks the trained network into anonymous pieces.

mod adam;
mod backprop;
mod gradcheck;

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub use adam::{adam_step, AdamState};
pub use backprop::{backward, param_slices, BlockGradients, Gradients};
pub use gradcheck::{gradient_check, GradCheck};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{self, Dataset, Network, PairedBlock, Piece, PieceId, Target};
use crate::solution::Solution;
use crate::{DEFAULT_BLOCKS, HIDDEN_DIM, IN_DIM};

/// Hidden width of the teacher network behind the synthetic targets.
const TEACHER_HIDDEN: usize = 64;
/// Standard deviation of the label noise before standardization.
const LABEL_NOISE: f64 = 0.05;

/// How block weights are drawn before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Each block starts as the mild contraction `x ↦ (1 − ε_k)·x`, built
    /// from mirrored ReLU pairs so the layer is exactly linear at step zero.
    /// `ε_k` grows with depth.
    #[default]
    NearIdentity,
    /// `W_in ~ N(0, 2/48)`, `W_out ~ N(0, 2/96) / √(2·blocks)`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub blocks: usize,
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub init: InitScheme,
    /// Mean contraction `ε` of a near-identity block; block `k` of `B` gets
    /// `ε·(½ + k/(B − 1))` with 10% multiplicative jitter.
    pub contraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            blocks: DEFAULT_BLOCKS,
            in_dim: IN_DIM,
            hidden_dim: HIDDEN_DIM,
            lr: 1e-4,
            epochs: 200,
            batch_size: 128,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            init: InitScheme::NearIdentity,
            contraction: 0.04,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim != IN_DIM || self.hidden_dim != HIDDEN_DIM {
            return Err(Error::Config("only the 48/96 block geometry is supported"));
        }
        if self.blocks == 0 || self.batch_size == 0 {
            return Err(Error::Config("blocks and batch size must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("learning rate must be positive"));
        }
        if !(self.contraction > 0.0 && self.contraction < 0.5) {
            return Err(Error::Config("contraction must lie in (0, 0.5)"));
        }
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.adam_beta1) || !unit(self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive"));
        }
        Ok(())
    }
}

/// `n` rows of standard normal inputs and targets from a fixed random
/// two-layer ReLU teacher plus noise, every column standardized.
///
/// The returned `pred` column is a copy of `truth` until a network is
/// trained.
pub fn synthesize_dataset(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Dataset("at least one row is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let teacher_in = Matrix::from_fn(TEACHER_HIDDEN, IN_DIM, |_, _| gauss() / libm::sqrt(IN_DIM as f64));
    let teacher_bias: Vec<f64> = (0..TEACHER_HIDDEN).map(|_| 0.5 * gauss()).collect();
    let teacher_out: Vec<f64> = (0..TEACHER_HIDDEN)
        .map(|_| gauss() / libm::sqrt(TEACHER_HIDDEN as f64))
        .collect();

    let mut x = Matrix::from_fn(n, IN_DIM, |_, _| gauss());
    let mut hidden = vec![0.0; n * TEACHER_HIDDEN];
    crate::linalg::affine_rows(x.as_slice(), n, &teacher_in, &teacher_bias, &mut hidden);
    let mut y: Vec<f64> = hidden
        .chunks_exact(TEACHER_HIDDEN)
        .map(|h| h.iter().zip(&teacher_out).map(|(a, w)| a.max(0.0) * w).sum::<f64>())
        .collect();
    for v in y.iter_mut() {
        *v += LABEL_NOISE * gauss();
    }

    for j in 0..IN_DIM {
        let col: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
        let (mean, sd) = mean_sd(&col);
        for i in 0..n {
            let v = &mut x.as_mut_slice()[i * IN_DIM + j];
            *v = (*v - mean) / sd;
        }
    }
    let (mean, sd) = mean_sd(&y);
    for v in y.iter_mut() {
        *v = (*v - mean) / sd;
    }
    Dataset::new(x, y.clone(), y)
}

/// Mean and population standard deviation; a degenerate column keeps unit
/// scale so standardization only centres it.
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = libm::sqrt(var);
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Fresh network per `cfg.init`, zero biases, readout `N(0, 1/48)`.
/// Block `k` gets ids `2k` and `2k + 1`, the readout `2·blocks`.
pub fn init_network(cfg: &TrainConfig) -> Result<Network> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for k in 0..cfg.blocks {
        let (w_in, w_out) = match cfg.init {
            InitScheme::NearIdentity => contraction_block(&mut rng, k, cfg.blocks, cfg.contraction),
            InitScheme::Gaussian => gaussian_block(&mut rng, cfg.blocks),
        };
        let id = 2 * k as u32;
        let input = Piece::new(PieceId(id), w_in, Vector::zeros(HIDDEN_DIM))?;
        let output = Piece::new(PieceId(id + 1), w_out, Vector::zeros(IN_DIM))?;
        blocks.push(PairedBlock::new(input, output)?);
    }
    let readout = Normal::new(0.0, libm::sqrt(1.0 / IN_DIM as f64)).expect("positive sd");
    let last = Piece::new(
        PieceId(2 * cfg.blocks as u32),
        Matrix::from_fn(1, IN_DIM, |_, _| readout.sample(&mut rng)),
        Vector::zeros(1),
    )?;
    Network::new(blocks, last)
}

fn gaussian_block(rng: &mut ChaCha8Rng, blocks: usize) -> (Matrix, Matrix) {
    let sd_in = libm::sqrt(2.0 / IN_DIM as f64);
    let sd_out = libm::sqrt(2.0 / HIDDEN_DIM as f64) / libm::sqrt(2.0 * blocks as f64);
    let din = Normal::new(0.0, sd_in).expect("positive sd");
    let dout = Normal::new(0.0, sd_out).expect("positive sd");
    let w_in = Matrix::from_fn(HIDDEN_DIM, IN_DIM, |_, _| din.sample(rng));
    let w_out = Matrix::from_fn(IN_DIM, HIDDEN_DIM, |_, _| dout.sample(rng));
    (w_in, w_out)
}

/// `W_in = √2·[U; −U]` with `U` Haar orthogonal and `W_out = [V, −V]` with
/// `V = −ε·Uᵀ/√2`. Since `relu(z) − relu(−z) = z` the block computes
/// `(1 − ε)·x` exactly.
fn contraction_block(rng: &mut ChaCha8Rng, k: usize, blocks: usize, mean: f64) -> (Matrix, Matrix) {
    let d = IN_DIM;
    let u = random_orthogonal(d, rng);
    let depth = if blocks > 1 { k as f64 / (blocks - 1) as f64 } else { 0.5 };
    let jitter: f64 = StandardNormal.sample(rng);
    let eps = mean * (0.5 + depth) * (1.0 + 0.1 * jitter);
    let root2 = core::f64::consts::SQRT_2;
    let w_in = Matrix::from_fn(2 * d, d, |j, i| {
        if j < d {
            root2 * u[(j, i)]
        } else {
            -root2 * u[(j - d, i)]
        }
    });
    let v = -eps / root2;
    let w_out = Matrix::from_fn(d, 2 * d, |i, j| if j < d { v * u[(j, i)] } else { -v * u[(j - d, i)] });
    (w_in, w_out)
}

/// Haar-distributed orthogonal matrix: Gram-Schmidt on Gaussian rows, which
/// equals QR with a positive diagonal in `R`.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut q = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let data = q.as_mut_slice();
    for i in 0..n {
        // Two passes keep the rows orthogonal to working precision.
        for _ in 0..2 {
            for k in 0..i {
                let (done, rest) = data.split_at_mut(i * n);
                let qk = &done[k * n..(k + 1) * n];
                let row = &mut rest[..n];
                let proj = crate::linalg::dot(qk, row);
                for (x, y) in row.iter_mut().zip(qk) {
                    *x -= proj * y;
                }
            }
        }
        let row = &mut data[i * n..(i + 1) * n];
        let norm = libm::sqrt(crate::linalg::dot(row, row));
        for x in row.iter_mut() {
            *x /= norm;
        }
    }
    q
}

/// A trained network together with its training record.
#[derive(Debug, Clone)]
pub struct Trained {
    pub network: Network,
    /// The training data with `pred` replaced by the network's outputs.
    pub dataset: Dataset,
    /// Mean of the per-batch `½(f − y)²` losses, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// Final MSE against `truth` over the whole dataset.
    pub train_mse: f64,
}

/// Mini-batch Adam on the batch mean of `½(f(x) − truth)²`, rows reshuffled
/// every epoch. Bit-for-bit reproducible for a given config and dataset.
pub fn train_network(cfg: &TrainConfig, ds: &Dataset) -> Result<Trained> {
    train_with_progress(cfg, ds, |_, _| {})
}

/// [`train_network`] calling `progress(epoch, loss)` after every epoch.
pub fn train_with_progress(
    cfg: &TrainConfig,
    ds: &Dataset,
    mut progress: impl FnMut(usize, f64),
) -> Result<Trained> {
    let mut net = init_network(cfg)?;
    if ds.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset"));
    }
    let n = ds.len();
    let lengths: Vec<usize> = param_slices(&mut net).iter().map(|p| p.len()).collect();
    let mut state = AdamState::new(&lengths);
    let mut grads = Gradients::zeros(cfg.blocks);
    let mut ws = backprop::Workspace::default();
    // Shuffling draws from a stream separate from initialization.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4521);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size * IN_DIM);
    let mut by = Vec::with_capacity(cfg.batch_size);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        rows.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in rows.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &r in batch {
                bx.extend_from_slice(ds.x().row(r));
                by.push(ds.truth()[r]);
            }
            let loss = backprop::batch_backward(&net, &bx, &by, &mut grads, &mut ws);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += loss;
            batches += 1;
            adam_step(&mut param_slices(&mut net), &grads.tensors(), &mut state, cfg)?;
        }
        let mean = total / batches as f64;
        epoch_losses.push(mean);
        progress(epoch, mean);
    }

    if param_slices(&mut net).iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    let train_mse = model::mse(&net, ds, n, Target::Truth)?;
    if !train_mse.is_finite() {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    let pred = net.forward_rows(ds.x().as_slice(), n);
    let dataset = ds.clone().with_pred(pred)?;
    Ok(Trained {
        network: net,
        dataset,
        epoch_losses,
        train_mse,
    })
}

/// Rounds every weight and bias to the nearest `f32`, the precision pieces
/// are stored at.
pub fn quantize_f32(net: &Network) -> Network {
    let mut q = net.clone();
    for p in param_slices(&mut q) {
        for v in p.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
    q
}

/// Shuffled pieces, the dataset they must reproduce and the hidden answer.
#[derive(Debug, Clone)]
pub struct PuzzleInstance {
    /// All pieces, `pieces[i].id() == PieceId(i)`.
    pub pieces: Vec<Piece>,
    /// `pred` is the output of the quantized, correctly assembled network.
    pub dataset: Dataset,
    pub sealed_solution: Solution,
}

/// Quantizes `net` to `f32`, recomputes `pred` from the quantized network,
/// and relabels all pieces with a seeded uniform permutation of
/// `0..2·blocks + 1`.
///
/// The sealed solution lists pairs by ascending input id with `order`
/// giving the running order as indices into that list.
pub fn shuffle_and_export(net: &Network, ds: &Dataset, seed: u64) -> Result<PuzzleInstance> {
    let net = quantize_f32(net);
    let pred = net.forward_rows(ds.x().as_slice(), ds.len());
    let dataset = ds.clone().with_pred(pred)?;

    let nb = net.blocks().len();
    let total = 2 * nb + 1;
    let mut ids: Vec<u32> = (0..total as u32).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // Original slot s: block k input is 2k, output 2k + 1, readout 2·nb.
    let mut pieces: Vec<Option<Piece>> = vec![None; total];
    let mut true_pairs = Vec::with_capacity(nb);
    for (k, b) in net.blocks().iter().enumerate() {
        let (i, o) = (PieceId(ids[2 * k]), PieceId(ids[2 * k + 1]));
        pieces[i.0 as usize] = Some(b.input().with_id(i));
        pieces[o.0 as usize] = Some(b.output().with_id(o));
        true_pairs.push((i, o));
    }
    let last_id = PieceId(ids[2 * nb]);
    pieces[last_id.0 as usize] = Some(net.last().with_id(last_id));
    let pieces: Vec<Piece> = pieces.into_iter().map(|p| p.expect("every slot filled")).collect();

    let mut by_input: Vec<usize> = (0..nb).collect();
    by_input.sort_by_key(|&k| true_pairs[k].0);
    let pairs: Vec<(PieceId, PieceId)> = by_input.iter().map(|&k| true_pairs[k]).collect();
    let mut index_of = vec![0; nb];
    for (j, &k) in by_input.iter().enumerate() {
        index_of[k] = j;
    }
    let sealed_solution = Solution {
        pairs,
        order: (0..nb).map(|k| index_of[k]).collect(),
        last_id,
    };
    sealed_solution.validate()?;
    Ok(PuzzleInstance {
        pieces,
        dataset,
        sealed_solution,
    })
}
