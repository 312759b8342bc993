//! Frequency transformation block: a time-frequency attention gate followed
//! by a learned global mixing matrix along the frequency axis, fused with the
//! block input through a 1×1 complex convolution.

use ndarray::{s, Array2, Array4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::complex_nn::{complex_activation, complex_activation_backward, sigmoid, ComplexConv2d, ComplexTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FtbOrder {
    /// Gate the input with the attention map, then mix along frequency.
    #[default]
    AttentionFirst,
    /// Mix along frequency, then gate with the attention map.
    MatrixFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ftb {
    pub attn_conv_in: ComplexConv2d,
    pub attn_conv_out: ComplexConv2d,
    /// `[F × F]`, shared by the real and imaginary parts.
    pub freq_fc: Array2<f64>,
    pub concat_conv: ComplexConv2d,
    pub order: FtbOrder,
}

crate::impl_parameters!(Ftb { freq_fc } nested { attn_conv_in, attn_conv_out, concat_conv });

pub fn attention_channels(channels: usize) -> usize {
    (channels / 4).max(2)
}

pub struct FtbCache {
    pre_act: ComplexTensor,
    hidden: ComplexTensor,
    /// Sigmoid gate, one channel.
    gate: ComplexTensor,
    /// Input to the stage applied second (gated input or mixed input).
    mid: ComplexTensor,
    fused_in: ComplexTensor,
}

/// `out[b, c, f, t] = Σ_g m[f, g] · x[b, c, g, t]`
fn mix_freq(m: &Array2<f64>, x: &Array4<f64>) -> Array4<f64> {
    let mut out = Array4::zeros(x.dim());
    for (mut o, xi) in out.outer_iter_mut().zip(x.outer_iter()) {
        for (mut oc, xc) in o.outer_iter_mut().zip(xi.outer_iter()) {
            oc.assign(&m.dot(&xc));
        }
    }
    out
}

/// Accumulates `Σ dy · xᵀ` over batch and channel into `dm`.
fn mix_weight_grad(dy: &Array4<f64>, x: &Array4<f64>, dm: &mut Array2<f64>) {
    for (d, xi) in dy.outer_iter().zip(x.outer_iter()) {
        for (dc, xc) in d.outer_iter().zip(xi.outer_iter()) {
            *dm += &dc.dot(&xc.t());
        }
    }
}

fn gate_part(x: &Array4<f64>, g: &Array4<f64>) -> Array4<f64> {
    let gb = g.broadcast(x.dim()).expect("gate has one channel");
    x * &gb
}

/// Gradient of the single-channel gate from `y = x ⊙ g`.
fn gate_grad(dy: &Array4<f64>, x: &Array4<f64>) -> Array4<f64> {
    (dy * x).sum_axis(Axis(1)).insert_axis(Axis(1))
}

fn apply_gate(x: &ComplexTensor, g: &ComplexTensor) -> ComplexTensor {
    ComplexTensor {
        re: gate_part(&x.re, &g.re),
        im: gate_part(&x.im, &g.im),
    }
}

fn apply_mix(m: &Array2<f64>, x: &ComplexTensor) -> ComplexTensor {
    ComplexTensor {
        re: mix_freq(m, &x.re),
        im: mix_freq(m, &x.im),
    }
}

impl Ftb {
    pub fn new(channels: usize, freq: usize, order: FtbOrder, rng: &mut impl Rng) -> Self {
        let ca = attention_channels(channels);
        let bound = 0.1 / (freq as f64).sqrt();
        let mut freq_fc = crate::params::uniform((freq, freq), bound, rng);
        freq_fc.diag_mut().mapv_inplace(|v| v + 1.0);
        Self {
            attn_conv_in: ComplexConv2d::pointwise(channels, ca, rng),
            attn_conv_out: ComplexConv2d::pointwise(ca, 1, rng),
            freq_fc,
            concat_conv: ComplexConv2d::pointwise(2 * channels, channels, rng),
            order,
        }
    }

    pub fn channels(&self) -> usize {
        self.concat_conv.out_channels()
    }

    pub fn freq(&self) -> usize {
        self.freq_fc.nrows()
    }

    fn check(&self, x: &ComplexTensor) -> Result<()> {
        if x.freq() != self.freq() {
            return Err(Error::ShapeMismatch(format!(
                "frequency transform expects {} bins, got {}",
                self.freq(),
                x.freq()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &ComplexTensor) -> Result<(ComplexTensor, FtbCache)> {
        self.check(x)?;
        let pre_act = self.attn_conv_in.forward(x)?;
        let hidden = complex_activation(&pre_act);
        let logits = self.attn_conv_out.forward(&hidden)?;
        let gate = ComplexTensor {
            re: logits.re.mapv(sigmoid),
            im: logits.im.mapv(sigmoid),
        };
        let (mid, y) = match self.order {
            FtbOrder::AttentionFirst => {
                let gated = apply_gate(x, &gate);
                let y = apply_mix(&self.freq_fc, &gated);
                (gated, y)
            }
            FtbOrder::MatrixFirst => {
                let mixed = apply_mix(&self.freq_fc, x);
                let y = apply_gate(&mixed, &gate);
                (mixed, y)
            }
        };
        let fused_in = ComplexTensor::concat_channels(x, &y)?;
        let out = self.concat_conv.forward(&fused_in)?;
        Ok((
            out,
            FtbCache {
                pre_act,
                hidden,
                gate,
                mid,
                fused_in,
            },
        ))
    }

    pub fn backward(
        &self,
        x: &ComplexTensor,
        cache: &FtbCache,
        dout: &ComplexTensor,
        grad: &mut Self,
    ) -> Result<ComplexTensor> {
        let d_fused = self
            .concat_conv
            .backward(&cache.fused_in, dout, &mut grad.concat_conv)?;
        let (mut dx, dy) = d_fused.split_channels(self.channels());
        let mt = self.freq_fc.t().to_owned();
        let (d_gate, dx_path) = match self.order {
            FtbOrder::AttentionFirst => {
                mix_weight_grad(&dy.re, &cache.mid.re, &mut grad.freq_fc);
                mix_weight_grad(&dy.im, &cache.mid.im, &mut grad.freq_fc);
                let d_gated = apply_mix(&mt, &dy);
                let d_gate = ComplexTensor {
                    re: gate_grad(&d_gated.re, &x.re),
                    im: gate_grad(&d_gated.im, &x.im),
                };
                (d_gate, apply_gate(&d_gated, &cache.gate))
            }
            FtbOrder::MatrixFirst => {
                let d_gate = ComplexTensor {
                    re: gate_grad(&dy.re, &cache.mid.re),
                    im: gate_grad(&dy.im, &cache.mid.im),
                };
                let d_mixed = apply_gate(&dy, &cache.gate);
                mix_weight_grad(&d_mixed.re, &x.re, &mut grad.freq_fc);
                mix_weight_grad(&d_mixed.im, &x.im, &mut grad.freq_fc);
                (d_gate, apply_mix(&mt, &d_mixed))
            }
        };
        dx.add_assign(&dx_path);
        let d_logits = ComplexTensor {
            re: &d_gate.re * &cache.gate.re.mapv(|s| s * (1.0 - s)),
            im: &d_gate.im * &cache.gate.im.mapv(|s| s * (1.0 - s)),
        };
        let d_hidden = self
            .attn_conv_out
            .backward(&cache.hidden, &d_logits, &mut grad.attn_conv_out)?;
        let d_pre = complex_activation_backward(&cache.pre_act, &d_hidden);
        dx.add_assign(&self.attn_conv_in.backward(x, &d_pre, &mut grad.attn_conv_in)?);
        Ok(dx)
    }

    /// Energy per frequency bin summed over batch, channels and time.
    pub fn bin_energy(t: &ComplexTensor) -> Vec<f64> {
        (0..t.freq())
            .map(|f| {
                let r = t.re.slice(s![.., .., f, ..]);
                let i = t.im.slice(s![.., .., f, ..]);
                r.iter().chain(i.iter()).map(|v| v * v).sum()
            })
            .collect()
    }
}
