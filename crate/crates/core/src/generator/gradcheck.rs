//! Central-difference check of [`backward`](super::backward).
//!
//! The reference loss is evaluated by a scalar forward pass in double-double
//! arithmetic, so the difference `L(θ + h) − L(θ − h)` carries no
//! cancellation error and the comparison is limited only by the `O(h²)`
//! truncation of the central difference.

use alloc::vec::Vec;

use super::backprop::{backward, param_slices, Gradients};
use crate::error::Result;
use crate::linalg::Vector;
use crate::model::Network;
use crate::{HIDDEN_DIM, IN_DIM};

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let s = Dd::two_sum(s.hi, s.lo + t.hi);
        Dd::two_sum(s.hi, s.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let err = libm::fma(self.hi, o.hi, -p);
        Dd::two_sum(p, err + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_f64(self, o: f64) -> Dd {
        self.mul(Dd::from(o))
    }

    fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// `½(f(x) − y)²` in double-double.
fn reference_loss(net: &Network, x: &[f64], y: f64) -> Dd {
    let mut state: Vec<Dd> = x.iter().map(|&v| Dd::from(v)).collect();
    let mut hidden = [Dd::ZERO; HIDDEN_DIM];
    for block in net.blocks() {
        let w_in = block.input().weight();
        let b_in = block.input().bias();
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut acc = Dd::from(b_in[j]);
            for (i, s) in state.iter().enumerate() {
                acc = acc.add(s.mul_f64(w_in[(j, i)]));
            }
            *h = if acc.is_positive() { acc } else { Dd::ZERO };
        }
        let w_out = block.output().weight();
        let b_out = block.output().bias();
        for (i, s) in state.iter_mut().enumerate() {
            let mut acc = s.add(Dd::from(b_out[i]));
            for (j, h) in hidden.iter().enumerate() {
                acc = acc.add(h.mul_f64(w_out[(i, j)]));
            }
            *s = acc;
        }
    }
    let w = net.last().weight();
    let mut out = Dd::from(net.last().bias()[0]);
    for (i, s) in state.iter().enumerate().take(IN_DIM) {
        out = out.add(s.mul_f64(w[(0, i)]));
    }
    let e = out.add(Dd::from(y).neg());
    e.mul(e).mul_f64(0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|)` over all
    /// parameters; a component where both vanish counts as exact.
    pub max_relative_error: f64,
    /// `(tensor, index)` of that parameter in [`param_slices`] order.
    pub worst: (usize, usize),
    pub parameters: usize,
}

/// Compares [`backward`] with central differences of step `h` on every
/// parameter of `net`.
pub fn gradient_check(net: &Network, x: &Vector, y: f64, h: f64) -> Result<GradCheck> {
    let analytic = backward(net, x, y)?;
    Ok(compare(net, x, y, h, &analytic))
}

fn compare(net: &Network, x: &Vector, y: f64, h: f64, analytic: &Gradients) -> GradCheck {
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let mut probe = net.clone();
    let mut check = GradCheck {
        max_relative_error: 0.0,
        worst: (0, 0),
        parameters: 0,
    };
    for (t, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let orig = param_slices(&mut probe)[t][i];
            let (plus, minus) = (orig + h, orig - h);
            param_slices(&mut probe)[t][i] = plus;
            let up = reference_loss(&probe, x.as_slice(), y);
            param_slices(&mut probe)[t][i] = minus;
            let down = reference_loss(&probe, x.as_slice(), y);
            param_slices(&mut probe)[t][i] = orig;
            // The stored step may differ from 2h by rounding of orig ± h.
            let numeric = up.add(down.neg()).to_f64() / (plus - minus);
            let scale = a.abs().max(numeric.abs());
            let err = if scale == 0.0 { 0.0 } else { (a - numeric).abs() / scale };
            if err > check.max_relative_error {
                check.max_relative_error = err;
                check.worst = (t, i);
            }
            check.parameters += 1;
        }
    }
    check
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network_forward;
    use crate::model::tests::{random_network, random_vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_loss_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = random_network(&mut rng, 3, 0.2);
        let x = random_vector(&mut rng, IN_DIM);
        let e = network_forward(&net, &x).unwrap() - 0.3;
        let l = reference_loss(&net, x.as_slice(), 0.3).to_f64();
        assert!((l - 0.5 * e * e).abs() <= 1e-14 * l.max(1.0));
    }

    #[test]
    fn double_double_keeps_low_bits() {
        let a = Dd::from(1.0).add(Dd::from(1e-20));
        let b = a.add(Dd::from(-1.0));
        assert_eq!(b.to_f64(), 1e-20);
        let p = Dd::from(1.0 + f64::EPSILON).mul(Dd::from(1.0 - f64::EPSILON));
        assert_eq!(p.hi, 1.0);
        assert_eq!(p.lo, -f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn four_block_network_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = random_network(&mut rng, 4, 0.15);
        for _ in 0..3 {
            let x = random_vector(&mut rng, IN_DIM);
            let y: f64 = rng.random_range(-1.0..1.0);
            let c = gradient_check(&net, &x, y, 1e-5).unwrap();
            assert_eq!(c.parameters, 4 * (2 * 96 * 48 + 96 + 48) + 49);
            assert!(c.max_relative_error < 1e-5, "{c:?}");
        }
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = random_network(&mut rng, 2, 0.15);
        let x = random_vector(&mut rng, IN_DIM);
        let mut g = backward(&net, &x, 0.5).unwrap();
        g.blocks[1].w_out[7] *= 1.001;
        let c = compare(&net, &x, 0.5, 1e-5, &g);
        assert!(c.max_relative_error > 1e-4);
        assert_eq!(c.worst, (6, 7));
    }
}
