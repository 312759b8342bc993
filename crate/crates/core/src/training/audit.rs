use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complex_nn::{ComplexConv2d, ComplexConvTranspose2d, ComplexTensor, ConvGeometry, DscConv2d};
use crate::dat_rnn::{
    attention, attention_backward, mask_and_enhance, mask_and_enhance_backward, DatRnnBlock, Linear, Lstm, MaskTarget,
};
use crate::error::{Error, Result};
use crate::ftb::{Ftb, FtbOrder};
use crate::gradcheck::{check_gradients, GradCheckReport};
use crate::network::{Model, ModelConfig, Variant};
use crate::params::Parameters;
use crate::stft::StftConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditModule {
    ComplexConv2d,
    ComplexTransposedConv2d,
    Dsc,
    Ftb,
    Attention,
    MaskAndEnhance,
    Lstm,
    DatRnn,
    Network,
}

impl AuditModule {
    pub const ALL: [AuditModule; 9] = [
        AuditModule::ComplexConv2d,
        AuditModule::ComplexTransposedConv2d,
        AuditModule::Dsc,
        AuditModule::Ftb,
        AuditModule::Attention,
        AuditModule::MaskAndEnhance,
        AuditModule::Lstm,
        AuditModule::DatRnn,
        AuditModule::Network,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AuditModule::ComplexConv2d => "complex_conv2d",
            AuditModule::ComplexTransposedConv2d => "complex_transposed_conv2d",
            AuditModule::Dsc => "dsc",
            AuditModule::Ftb => "ftb",
            AuditModule::Attention => "attention",
            AuditModule::MaskAndEnhance => "mask_and_enhance",
            AuditModule::Lstm => "lstm",
            AuditModule::DatRnn => "dat_rnn",
            AuditModule::Network => "network",
        }
    }
}

impl fmt::Display for AuditModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AuditModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown module {s:?}")))
    }
}

/// Size of an audit instance: channels (or feature width), frequency bins
/// and frames. Written `CxFxT`; the default is `3x5x4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditDims {
    pub channels: usize,
    pub freq: usize,
    pub frames: usize,
}

impl Default for AuditDims {
    fn default() -> Self {
        Self {
            channels: 3,
            freq: 5,
            frames: 4,
        }
    }
}

impl FromStr for AuditDims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(['x', ','])
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config(format!("dims must look like 2x5x4, got {s:?}")))?;
        match parts[..] {
            [channels, freq, frames] if channels > 0 && freq > 0 && frames > 0 => Ok(Self { channels, freq, frames }),
            _ => Err(Error::config(format!("dims must be three positive sizes, got {s:?}"))),
        }
    }
}

fn random2(dim: (usize, usize), rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(dim, || rng.gen_range(-1.0..1.0))
}

fn weighted<D: ndarray::Dimension>(y: &ndarray::Array<f64, D>, w: &ndarray::Array<f64, D>) -> f64 {
    (y * w).sum()
}

fn tensor_like(y: &ComplexTensor, rng: &mut impl Rng) -> ComplexTensor {
    ComplexTensor::random(y.dim(), rng)
}

/// Central finite differences at `eps` over every parameter and input
/// element of a small random instance of `module`, against its analytic
/// backward pass, for the scalar loss `⟨w, f(x)⟩` with random `w`.
///
/// Convolutional modules use kernel (3, 2), frequency stride 2, and the
/// given channels in and out. Sequence modules use `channels` as the
/// feature width and `frames` as the sequence length; the dual-path block
/// uses at least three features, since layer norm over two is a sign
/// function up to its epsilon and finite differences drown in round-off.
/// The network audit
/// builds a two-level model on `2^k + 1` bins with the smallest such `k`
/// covering `freq`. Its leaky activations are not differentiable at zero,
/// so an unlucky seed can place a pre-activation within `eps` of the kink;
/// the report names the offending element.
pub fn grad_audit(module: AuditModule, dims: AuditDims, eps: f64, seed: u64) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::config("eps must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let AuditDims {
        channels: c,
        freq: f,
        frames: t,
    } = dims;
    let geom = ConvGeometry {
        stride: (2, 1),
        pad_freq: (1, 1),
        pad_time: (1, 0),
        groups: 1,
    };
    let report = match module {
        AuditModule::ComplexConv2d => {
            let conv = ComplexConv2d::new(c, c, (3, 2), geom, r);
            let x = ComplexTensor::random((1, c, f, t), r);
            let w = tensor_like(&conv.forward(&x)?, r);
            let mut g = conv.zeros_like();
            let dx = conv.backward(&x, &w, &mut g)?;
            check_gradients(&conv, &x, &g, &dx, eps, |p, x| p.forward(x).unwrap().dot(&w))
        }
        AuditModule::ComplexTransposedConv2d => {
            let conv = ComplexConvTranspose2d::new(c, c, (3, 2), geom, r);
            let x = ComplexTensor::random((1, c, f, t), r);
            let w = tensor_like(&conv.forward(&x)?, r);
            let mut g = conv.zeros_like();
            let dx = conv.backward(&x, &w, &mut g)?;
            check_gradients(&conv, &x, &g, &dx, eps, |p, x| p.forward(x).unwrap().dot(&w))
        }
        AuditModule::Dsc => {
            let conv = DscConv2d::new(c, c + 1, (3, 2), geom, r);
            let x = ComplexTensor::random((1, c, f, t), r);
            let w = tensor_like(&conv.forward(&x)?, r);
            let mut g = conv.zeros_like();
            let dx = conv.backward(&x, &w, &mut g)?;
            check_gradients(&conv, &x, &g, &dx, eps, |p, x| p.forward(x).unwrap().dot(&w))
        }
        AuditModule::Ftb => {
            let ftb = Ftb::new(c, f, FtbOrder::AttentionFirst, r);
            let x = ComplexTensor::random((1, c, f, t), r);
            let (y, cache) = ftb.forward_cached(&x)?;
            let w = tensor_like(&y, r);
            let mut g = ftb.zeros_like();
            let dx = ftb.backward(&x, &cache, &w, &mut g)?;
            check_gradients(&ftb, &x, &g, &dx, eps, |p, x| p.forward(x).unwrap().dot(&w))
        }
        AuditModule::Attention => {
            let mut report = GradCheckReport::empty();
            for causal in [false, true] {
                let kq = random2((2 * t, c), r);
                let split = |kq: &Array2<f64>| (kq.slice(s![..t, ..]).to_owned(), kq.slice(s![t.., ..]).to_owned());
                let (k, q) = split(&kq);
                let out = attention(&k, &q, causal)?;
                let w = random2((t, c), r);
                let (dk, dq) = attention_backward(&k, &q, &out, &w);
                let dkq = concatenate![Axis(0), dk, dq];
                let none = ndarray::Array1::<f64>::zeros(0);
                report.merge(check_gradients(&none, &kq, &none, &dkq, eps, |_, kq| {
                    let (k, q) = split(kq);
                    weighted(&attention(&k, &q, causal).unwrap().context, &w)
                }));
            }
            report
        }
        AuditModule::MaskAndEnhance => {
            let head = Linear::new(2 * c, c, r);
            let x = random2((4 * t, c), r);
            let part = |x: &Array2<f64>, i: usize| x.slice(s![i * t..(i + 1) * t, ..]).to_owned();
            let run =
                |h: &Linear, x: &Array2<f64>| mask_and_enhance(&part(x, 0), &part(x, 1), &part(x, 2), &part(x, 3), h);
            let (_, m, mask_in) = run(&head, &x);
            let w = random2((t, c), r);
            let mut g = head.zeros_like();
            let mg = mask_and_enhance_backward(&mask_in, &m, &part(&x, 2), &w, &head, &mut g);
            let dx = concatenate![Axis(0), mg.context, mg.queries, mg.target, mg.residual];
            check_gradients(&head, &x, &g, &dx, eps, |h, x| weighted(&run(h, x).0, &w))
        }
        AuditModule::Lstm => {
            let lstm = Lstm::new(c, c + 1, r);
            let x = random2((t, c), r);
            let (h, cache) = lstm.forward(&x);
            let w = random2(h.dim(), r);
            let mut g = lstm.zeros_like();
            let dx = lstm.backward(&cache, &w, &mut g);
            check_gradients(&lstm, &x, &g, &dx, eps, |p, x| weighted(&p.forward(x).0, &w))
        }
        AuditModule::DatRnn => {
            let d = c.max(3);
            let block = DatRnnBlock::new(d, 3, 4, MaskTarget::Input, r);
            let x = Array3::from_shape_simple_fn((1, d, t), || r.gen_range(-1.0..1.0));
            let (y, cache) = block.forward_cached(&x)?;
            let w = Array3::from_shape_simple_fn(y.dim(), || r.gen_range(-1.0..1.0));
            let mut g = block.zeros_like();
            let dx = block.backward(&cache, &w, &mut g)?;
            check_gradients(&block, &x, &g, &dx, eps, |p, x| weighted(&p.forward(x).unwrap(), &w))
        }
        AuditModule::Network => {
            let bins = (f.max(3) - 1).next_power_of_two() + 1;
            let fft = 2 * (bins - 1);
            let cfg = ModelConfig {
                variant: Variant::Base,
                encoder_channels: vec![c, 2 * c],
                datrnn_blocks: 1,
                datrnn_dim: 8,
                chunk_len: 4,
                lstm_hidden: 4,
                stft: StftConfig {
                    frame_len: fft,
                    hop: fft / 2,
                    fft_size: fft,
                    ..StftConfig::default()
                },
                seed,
                ..ModelConfig::default()
            };
            let model = Model::build(&cfg)?;
            let x = ComplexTensor::random((1, 1, bins, t), r);
            let (y, cache) = model.forward_cached(&x)?;
            let w = tensor_like(&y, r);
            let mut g = model.zeros_like();
            let dx = model.backward(&cache, &w, &mut g)?;
            check_gradients(&model, &x, &g, &dx, eps, |p, x| p.forward_tensor(x).unwrap().dot(&w))
        }
    };
    Ok(report)
}
