use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::model::Network;
use crate::{HIDDEN_DIM, IN_DIM};

/// Gradients of one residual block, laid out like the weights they belong to
/// (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGradients {
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Gradients for every parameter of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<BlockGradients>,
    pub last_weight: Vec<f64>,
    pub last_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros(blocks: usize) -> Self {
        Self {
            blocks: (0..blocks)
                .map(|_| BlockGradients {
                    w_in: vec![0.0; HIDDEN_DIM * IN_DIM],
                    b_in: vec![0.0; HIDDEN_DIM],
                    w_out: vec![0.0; IN_DIM * HIDDEN_DIM],
                    b_out: vec![0.0; IN_DIM],
                })
                .collect(),
            last_weight: vec![0.0; IN_DIM],
            last_bias: vec![0.0; 1],
        }
    }

    /// Tensors in the order of [`param_slices`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.push(b.w_in.as_slice());
            out.push(b.b_in.as_slice());
            out.push(b.w_out.as_slice());
            out.push(b.b_out.as_slice());
        }
        out.push(self.last_weight.as_slice());
        out.push(self.last_bias.as_slice());
        out
    }
}

/// Mutable views of every parameter tensor: for each block `W_in`, `b_in`,
/// `W_out`, `b_out`, then the readout weight and bias.
pub fn param_slices(net: &mut Network) -> Vec<&mut [f64]> {
    let (blocks, last) = net.parts_mut();
    let mut out = Vec::with_capacity(4 * blocks.len() + 2);
    for b in blocks.iter_mut() {
        let (input, output) = b.pieces_mut();
        let (w_in, b_in) = input.params_mut();
        out.push(w_in);
        out.push(b_in);
        let (w_out, b_out) = output.params_mut();
        out.push(w_out);
        out.push(b_out);
    }
    let (w, b) = last.params_mut();
    out.push(w);
    out.push(b);
    out
}

/// Exact gradient of `½(f(x) − y)²` for a single example.
pub fn backward(net: &Network, x: &Vector, y: f64) -> Result<Gradients> {
    if x.len() != IN_DIM {
        return Err(Error::DataLength {
            expected: IN_DIM,
            actual: x.len(),
        });
    }
    if !y.is_finite() {
        return Err(Error::NonFinite("target"));
    }
    let mut grads = Gradients::zeros(net.blocks().len());
    let mut ws = Workspace::default();
    batch_backward(net, x.as_slice(), &[y], &mut grads, &mut ws);
    Ok(grads)
}

/// Scratch buffers reused across mini-batches.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    /// States entering each block, then the final state.
    states: Vec<Vec<f64>>,
    /// Post-ReLU hidden activations of each block.
    hidden: Vec<Vec<f64>>,
    g: Vec<f64>,
    dh: Vec<f64>,
    out: Vec<f64>,
}

/// Overwrites `grads` with the gradient of the batch mean of `½(f(x) − y)²`
/// over the `y.len()` rows of `x`, returning that mean loss.
pub(crate) fn batch_backward(
    net: &Network,
    x: &[f64],
    y: &[f64],
    grads: &mut Gradients,
    ws: &mut Workspace,
) -> f64 {
    let n = y.len();
    let nb = net.blocks().len();
    debug_assert_eq!(x.len(), n * IN_DIM);
    debug_assert_eq!(grads.blocks.len(), nb);
    ws.states.resize_with(nb + 1, Vec::new);
    ws.hidden.resize_with(nb, Vec::new);

    ws.states[0].clear();
    ws.states[0].extend_from_slice(x);
    for (k, block) in net.blocks().iter().enumerate() {
        let (before, after) = ws.states.split_at_mut(k + 1);
        let s = &before[k];
        let h = &mut ws.hidden[k];
        h.resize(n * HIDDEN_DIM, 0.0);
        linalg::affine_rows(s, n, block.input().weight(), block.input().bias().as_slice(), h);
        for v in h.iter_mut() {
            *v = v.max(0.0);
        }
        let next = &mut after[0];
        next.resize(n * IN_DIM, 0.0);
        linalg::affine_rows(h, n, block.output().weight(), block.output().bias().as_slice(), next);
        for (o, si) in next.iter_mut().zip(s.iter()) {
            *o += si;
        }
    }

    let w_last = net.last().weight().row(0);
    let b_last = net.last().bias()[0];
    let fin = &ws.states[nb];
    ws.out.clear();
    ws.out
        .extend(fin.chunks_exact(IN_DIM).zip(y).map(|(s, t)| linalg::dot(w_last, s) + b_last - t));
    let loss = ws.out.iter().map(|e| 0.5 * e * e).sum::<f64>() / n as f64;

    // d loss / d output, then back into the final state.
    let inv_n = 1.0 / n as f64;
    grads.last_weight.fill(0.0);
    grads.last_bias[0] = 0.0;
    ws.g.resize(n * IN_DIM, 0.0);
    for (r, e) in ws.out.iter().enumerate() {
        let d = e * inv_n;
        grads.last_bias[0] += d;
        let s = &fin[r * IN_DIM..(r + 1) * IN_DIM];
        for (gw, si) in grads.last_weight.iter_mut().zip(s) {
            *gw += d * si;
        }
        for (gi, wi) in ws.g[r * IN_DIM..(r + 1) * IN_DIM].iter_mut().zip(w_last) {
            *gi = d * wi;
        }
    }

    ws.dh.resize(n * HIDDEN_DIM, 0.0);
    for k in (0..nb).rev() {
        let block = &net.blocks()[k];
        let gb = &mut grads.blocks[k];
        let s = &ws.states[k];
        let h = &ws.hidden[k];
        let g = &mut ws.g;
        let dh = &mut ws.dh;
        let (hd, d) = (HIDDEN_DIM as isize, IN_DIM as isize);

        // dW_out = gᵀ · h
        linalg::gemm(IN_DIM, n, HIDDEN_DIM, g, (1, d), h, (hd, 1), 0.0, &mut gb.w_out);
        column_sums(g, IN_DIM, &mut gb.b_out);
        // dh = (g · W_out) masked by the active units
        let w_out = block.output().weight().as_slice();
        linalg::gemm(n, IN_DIM, HIDDEN_DIM, g, (d, 1), w_out, (hd, 1), 0.0, dh);
        for (v, a) in dh.iter_mut().zip(h.iter()) {
            if *a <= 0.0 {
                *v = 0.0;
            }
        }
        // dW_in = dhᵀ · s
        linalg::gemm(HIDDEN_DIM, n, IN_DIM, dh, (1, hd), s, (d, 1), 0.0, &mut gb.w_in);
        column_sums(dh, HIDDEN_DIM, &mut gb.b_in);
        // g ← g + dh · W_in (identity path plus branch)
        let w_in = block.input().weight().as_slice();
        linalg::gemm(n, HIDDEN_DIM, IN_DIM, dh, (hd, 1), w_in, (d, 1), 1.0, g);
    }
    loss
}

fn column_sums(rows: &[f64], cols: usize, out: &mut [f64]) {
    out.fill(0.0);
    for row in rows.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}
