use ndarray::{Array1, Array2, Array4};

use super::ComplexTensor;
use crate::params::Parameters;

pub const NORM_EPS: f64 = 1e-8;

/// Layer normalization over `(channels, freq)` at each `(batch, time)`,
/// applied separately to the real and imaginary parts, with per-channel
/// learned scale and shift for each part.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexLayerNorm {
    pub gamma_re: Array1<f64>,
    pub beta_re: Array1<f64>,
    pub gamma_im: Array1<f64>,
    pub beta_im: Array1<f64>,
}

crate::impl_parameters!(ComplexLayerNorm {
    gamma_re,
    beta_re,
    gamma_im,
    beta_im
});

pub struct NormCache {
    x_hat: ComplexTensor,
    inv_std_re: Array2<f64>,
    inv_std_im: Array2<f64>,
}

impl NormCache {
    pub fn normalized(&self) -> &ComplexTensor {
        &self.x_hat
    }
}

fn normalize(x: &Array4<f64>) -> (Array4<f64>, Array2<f64>) {
    let (b, c, f, t) = x.dim();
    let n = (c * f) as f64;
    let mut x_hat = Array4::zeros(x.dim());
    let mut inv = Array2::zeros((b, t));
    for bi in 0..b {
        for ti in 0..t {
            let mut mean = 0.0;
            for ci in 0..c {
                for fi in 0..f {
                    mean += x[[bi, ci, fi, ti]];
                }
            }
            mean /= n;
            let mut var = 0.0;
            for ci in 0..c {
                for fi in 0..f {
                    var += (x[[bi, ci, fi, ti]] - mean).powi(2);
                }
            }
            var /= n;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            inv[[bi, ti]] = is;
            for ci in 0..c {
                for fi in 0..f {
                    x_hat[[bi, ci, fi, ti]] = (x[[bi, ci, fi, ti]] - mean) * is;
                }
            }
        }
    }
    (x_hat, inv)
}

fn affine(x_hat: &Array4<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> Array4<f64> {
    let mut y = x_hat.clone();
    for ((_, ci, _, _), v) in y.indexed_iter_mut() {
        *v = gamma[ci] * *v + beta[ci];
    }
    y
}

/// Returns `dx` and accumulates `dgamma`, `dbeta` for one part.
fn part_backward(
    x_hat: &Array4<f64>,
    inv: &Array2<f64>,
    gamma: &Array1<f64>,
    dy: &Array4<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array4<f64> {
    let (b, c, f, t) = x_hat.dim();
    let n = (c * f) as f64;
    let mut dx = Array4::zeros(x_hat.dim());
    for bi in 0..b {
        for ti in 0..t {
            let mut sum_d = 0.0;
            let mut sum_dx = 0.0;
            for ci in 0..c {
                for fi in 0..f {
                    let g = dy[[bi, ci, fi, ti]];
                    let xh = x_hat[[bi, ci, fi, ti]];
                    dgamma[ci] += g * xh;
                    dbeta[ci] += g;
                    let d = g * gamma[ci];
                    sum_d += d;
                    sum_dx += d * xh;
                }
            }
            let is = inv[[bi, ti]];
            for ci in 0..c {
                for fi in 0..f {
                    let d = dy[[bi, ci, fi, ti]] * gamma[ci];
                    let xh = x_hat[[bi, ci, fi, ti]];
                    dx[[bi, ci, fi, ti]] = is * (d - sum_d / n - xh * sum_dx / n);
                }
            }
        }
    }
    dx
}

impl ComplexLayerNorm {
    /// Unit scale, zero shift.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma_re: Array1::ones(channels),
            beta_re: Array1::zeros(channels),
            gamma_im: Array1::ones(channels),
            beta_im: Array1::zeros(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma_re.len()
    }

    pub fn forward(&self, x: &ComplexTensor) -> (ComplexTensor, NormCache) {
        let (hr, ir) = normalize(&x.re);
        let (hi, ii) = normalize(&x.im);
        let y = ComplexTensor {
            re: affine(&hr, &self.gamma_re, &self.beta_re),
            im: affine(&hi, &self.gamma_im, &self.beta_im),
        };
        (
            y,
            NormCache {
                x_hat: ComplexTensor { re: hr, im: hi },
                inv_std_re: ir,
                inv_std_im: ii,
            },
        )
    }

    pub fn backward(&self, cache: &NormCache, dy: &ComplexTensor, grad: &mut Self) -> ComplexTensor {
        let re = part_backward(
            &cache.x_hat.re,
            &cache.inv_std_re,
            &self.gamma_re,
            &dy.re,
            &mut grad.gamma_re,
            &mut grad.beta_re,
        );
        let im = part_backward(
            &cache.x_hat.im,
            &cache.inv_std_im,
            &self.gamma_im,
            &dy.im,
            &mut grad.gamma_im,
            &mut grad.beta_im,
        );
        ComplexTensor { re, im }
    }

    pub fn param_count(&self) -> usize {
        self.num_params()
    }
}
