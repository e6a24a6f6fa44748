use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Affine map stored input-major: `weight[i * out_dim + o]`.
///
/// Input-major rows let sparse inputs (hashed features) skip zero entries in
/// both the forward pass and the weight gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn normal<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, std: f64, rng: &mut R) -> Self {
        let mut l = Self::zeros(in_dim, out_dim);
        if std > 0.0 {
            let dist = Normal::new(0.0, std).expect("finite std");
            l.weight.iter_mut().for_each(|w| *w = dist.sample(rng));
        }
        l
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weight[i * self.out_dim..(i + 1) * self.out_dim]
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (o, w) in out.iter_mut().zip(self.row(i)) {
                    *o += xi * w;
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(x, &mut out);
        out
    }

    /// Accumulates `dW += x ⊗ dy`, `db += dy` into `grad`.
    pub fn accumulate_grad(grad: &mut Linear, x: &[f64], dy: &[f64]) {
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &mut grad.weight[i * grad.out_dim..(i + 1) * grad.out_dim];
                for (g, d) in row.iter_mut().zip(dy) {
                    *g += xi * d;
                }
            }
        }
        for (g, d) in grad.bias.iter_mut().zip(dy) {
            *g += d;
        }
    }

    /// `dx = W dy`.
    pub fn backward_input(&self, dy: &[f64], dx: &mut [f64]) {
        for (i, d) in dx.iter_mut().enumerate() {
            *d = self.row(i).iter().zip(dy).map(|(w, g)| w * g).sum();
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim, self.out_dim)
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Residual bottleneck: `h + up(gelu(down(h)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub down: Linear,
    pub up: Linear,
}

impl Adapter {
    pub const BOTTLENECK: usize = 48;

    /// The up-projection starts at `up_std` (tiny) with zero biases, so the
    /// block is nearly the identity at initialization.
    pub fn near_identity<R: Rng + ?Sized>(hidden: usize, up_std: f64, rng: &mut R) -> Self {
        Self {
            down: Linear::normal(hidden, Self::BOTTLENECK, (1.0 / hidden as f64).sqrt(), rng),
            up: Linear::normal(Self::BOTTLENECK, hidden, up_std, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        self.down.param_count() + self.up.param_count()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            down: self.down.zeros_like(),
            up: self.up.zeros_like(),
        }
    }

    pub fn forward(&self, h: &[f64]) -> Vec<f64> {
        let act: Vec<f64> = self.down.forward(h).into_iter().map(gelu).collect();
        let mut out = self.up.forward(&act);
        out.iter_mut().zip(h).for_each(|(o, x)| *o += x);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0, -1.2, -0.3, 0.0, 0.4, 1.7, 4.0] {
            let h = 1e-5;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        // tanh-approximation values.
        assert!((gelu(1.0) - 0.841_191_990_608_276_8).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.158_808_009_391_723_2).abs() < 1e-12);
    }

    #[test]
    fn linear_skips_nothing_it_should_not() {
        let l = Linear {
            in_dim: 2,
            out_dim: 3,
            weight: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            bias: vec![0.5, 0.0, -0.5],
        };
        assert_eq!(l.forward(&[1.0, -1.0]), vec![-2.5, -3.0, -3.5]);
        let mut dx = [0.0; 2];
        l.backward_input(&[1.0, 0.0, 1.0], &mut dx);
        assert_eq!(dx, [4.0, 10.0]);
    }
}
