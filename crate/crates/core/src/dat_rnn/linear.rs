use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::complex_nn::NORM_EPS;
use crate::params::uniform;

/// Affine map on row vectors: `y = x · wᵀ + b`, with `w` stored `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

crate::impl_parameters!(Linear { w, b });

impl Linear {
    pub fn new(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            w: uniform((d_out, d_in), bound, rng),
            b: uniform(d_out, bound, rng),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            w: Array2::zeros((d_out, d_in)),
            b: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Self) -> Array2<f64> {
        grad.w += &dy.t().dot(x);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

/// Normalization of each row over its features, with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

crate::impl_parameters!(LayerNorm { gamma, beta });

pub struct LnCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let n = x.ncols() as f64;
        let mut x_hat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, is) in x_hat.outer_iter_mut().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            *is = 1.0 / (var + NORM_EPS).sqrt();
            let s = *is;
            row.mapv_inplace(|v| (v - mean) * s);
        }
        let y = &x_hat * &self.gamma + &self.beta;
        (y, LnCache { x_hat, inv_std })
    }

    pub fn backward(&self, cache: &LnCache, dy: &Array2<f64>, grad: &mut Self) -> Array2<f64> {
        let n = dy.ncols() as f64;
        grad.gamma += &(dy * &cache.x_hat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let d = dy * &self.gamma;
        let mut dx = Array2::zeros(dy.dim());
        for r in 0..dy.nrows() {
            let dr = d.row(r);
            let xh = cache.x_hat.row(r);
            let sum_d = dr.sum();
            let sum_dx = dr.dot(&xh);
            let is = cache.inv_std[r];
            dx.row_mut(r).assign(&((&dr - sum_d / n - &(&xh * (sum_dx / n))) * is));
        }
        dx
    }
}
