use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use crate::complex_nn::sigmoid;
use crate::params::uniform;

/// Single-layer LSTM over row-vector sequences `[steps × d_in]`.
/// Gate blocks in `w_ih`, `w_hh` and `b` are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub b: Array1<f64>,
}

crate::impl_parameters!(Lstm { w_ih, w_hh, b });

pub struct LstmCache {
    x: Array2<f64>,
    /// Post-nonlinearity gates `[steps × 4h]`.
    gates: Array2<f64>,
    /// Cell states `[steps + 1 × h]`, row 0 is the initial state.
    c: Array2<f64>,
    /// Hidden states `[steps + 1 × h]`.
    h: Array2<f64>,
}

pub fn lstm_param_count(d_in: usize, hidden: usize) -> usize {
    4 * hidden * (d_in + hidden + 1)
}

impl Lstm {
    pub fn new(d_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: uniform((4 * hidden, d_in), bound, rng),
            w_hh: uniform((4 * hidden, hidden), bound, rng),
            b: uniform(4 * hidden, bound, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    /// Zero initial state. Returns hidden states `[steps × h]`.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LstmCache) {
        let h = self.hidden();
        let steps = x.nrows();
        let pre = x.dot(&self.w_ih.t()) + &self.b;
        let mut gates = Array2::zeros((steps, 4 * h));
        let mut cs = Array2::<f64>::zeros((steps + 1, h));
        let mut hs = Array2::<f64>::zeros((steps + 1, h));
        for t in 0..steps {
            let z = &pre.row(t) + &self.w_hh.dot(&hs.row(t));
            let mut g = gates.row_mut(t);
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let cc = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                g[k] = i;
                g[h + k] = f;
                g[2 * h + k] = cc;
                g[3 * h + k] = o;
                let c = f * cs[[t, k]] + i * cc;
                cs[[t + 1, k]] = c;
                hs[[t + 1, k]] = o * c.tanh();
            }
        }
        let out = hs.slice(s![1.., ..]).to_owned();
        (
            out,
            LstmCache {
                x: x.clone(),
                gates,
                c: cs,
                h: hs,
            },
        )
    }

    /// Backpropagation through time.
    pub fn backward(&self, cache: &LstmCache, dy: &Array2<f64>, grad: &mut Self) -> Array2<f64> {
        let h = self.hidden();
        let steps = dy.nrows();
        let mut dz_all = Array2::zeros((steps, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for t in (0..steps).rev() {
            let g = cache.gates.row(t);
            let mut dz = dz_all.row_mut(t);
            for k in 0..h {
                let (i, f, cc, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let c = cache.c[[t + 1, k]];
                let tc = c.tanh();
                let dh = dy[[t, k]] + dh_next[k];
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                dz[k] = dc * cc * i * (1.0 - i);
                dz[h + k] = dc * cache.c[[t, k]] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - cc * cc);
                dz[3 * h + k] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next = self.w_hh.t().dot(&dz);
        }
        grad.w_ih += &dz_all.t().dot(&cache.x);
        grad.w_hh += &dz_all.t().dot(&cache.h.slice(s![..steps, ..]));
        grad.b += &dz_all.sum_axis(Axis(0));
        dz_all.dot(&self.w_ih)
    }
}

pub(crate) fn reverse_rows(x: &Array2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}
