//! Complex U-Net with frequency transformation blocks, 1×1 complex skip
//! blocks and a dual-path attention RNN bottleneck.
//!
//! The encoder halves the frequency axis at every block and keeps the time
//! axis intact. The deepest feature map is flattened to `2·C·F` real features
//! per frame, projected to the dual-path width, processed, and projected
//! back. Each decoder stage consumes its input concatenated with the skip
//! block output of the mirrored encoder level; the last stage is linear and
//! emits a one-channel complex spectrum.

mod config;

pub use config::{ModelConfig, OutputMode, Variant};

use ndarray::{s, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::complex_nn::{
    complex_activation, complex_activation_backward, ComplexConv2d, ComplexConvTranspose2d, ComplexLayerNorm,
    ComplexTensor, ConvGeometry, DscConv2d, DscConvTranspose2d, NormCache, SpatialConv, SpatialConvTranspose,
};
use crate::dat_rnn::{BlockCache, DatRnnBlock, Linear};
use crate::error::{Error, Result};
use crate::ftb::{Ftb, FtbCache};
use crate::params::{join, ParamContainer, Parameters, VisitFn, VisitMutFn};
use crate::signal_io::Waveform;
use crate::stft::{istft, stft, ComplexSpectrogram};

/// Tensor path prefix of model parameters inside a parameter container.
pub const MODEL_PREFIX: &str = "model";
/// Metadata key holding the architecture.
pub const MODEL_CONFIG_KEY: &str = "model_config";

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub conv: SpatialConv,
    pub norm: ComplexLayerNorm,
}

crate::impl_parameters!(EncoderBlock {} nested { conv, norm });

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock {
    pub deconv: SpatialConvTranspose,
    /// Absent on the output head.
    pub norm: Option<ComplexLayerNorm>,
}

crate::impl_parameters!(DecoderBlock {} nested { deconv, norm });

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Vec<EncoderBlock>,
    /// One entry per encoder level.
    pub ftb: Vec<Option<Ftb>>,
    pub skip: Vec<ComplexConv2d>,
    pub in_proj: Linear,
    pub datrnn: Vec<DatRnnBlock>,
    pub out_proj: Linear,
    /// Indexed by the mirrored encoder level; run deepest first.
    pub decoder: Vec<DecoderBlock>,
}

impl Parameters for Model {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        for (i, ftb) in self.ftb.iter().enumerate() {
            ftb.visit(&join(prefix, &format!("ftb.{i}")), f);
        }
        self.skip.visit(&join(prefix, "skip"), f);
        self.in_proj.visit(&join(prefix, "in_proj"), f);
        self.datrnn.visit(&join(prefix, "datrnn"), f);
        self.out_proj.visit(&join(prefix, "out_proj"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        for (i, ftb) in self.ftb.iter_mut().enumerate() {
            ftb.visit_mut(&join(prefix, &format!("ftb.{i}")), f);
        }
        self.skip.visit_mut(&join(prefix, "skip"), f);
        self.in_proj.visit_mut(&join(prefix, "in_proj"), f);
        self.datrnn.visit_mut(&join(prefix, "datrnn"), f);
        self.out_proj.visit_mut(&join(prefix, "out_proj"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
    }
}

struct EncoderCache {
    input: ComplexTensor,
    norm: NormCache,
    normed: ComplexTensor,
    /// FTB cache and the FTB input.
    ftb: Option<(FtbCache, ComplexTensor)>,
    out: ComplexTensor,
}

struct DecoderCache {
    input: ComplexTensor,
    norm: Option<(NormCache, ComplexTensor)>,
}

pub struct ModelCache {
    input: ComplexTensor,
    encoder: Vec<EncoderCache>,
    flat_in: Vec<ndarray::Array2<f64>>,
    blocks: Vec<BlockCache>,
    rnn_rows: Vec<ndarray::Array2<f64>>,
    decoder: Vec<DecoderCache>,
    head: ComplexTensor,
}

fn encoder_geometry(cfg: &ModelConfig) -> ConvGeometry {
    ConvGeometry {
        stride: cfg.stride,
        pad_freq: cfg.pad_freq(),
        pad_time: (cfg.kernel.1 - 1, 0),
        groups: 1,
    }
}

/// Crops at the end of the time axis so that the decoder is causal in time.
fn decoder_geometry(cfg: &ModelConfig) -> ConvGeometry {
    ConvGeometry {
        pad_time: (0, cfg.kernel.1 - 1),
        ..encoder_geometry(cfg)
    }
}

/// `[B, C, F, T]` complex to `[B, 2·C·F, T]` real: real parts first.
fn flatten_features(x: &ComplexTensor) -> Array3<f64> {
    let (b, c, f, t) = x.dim();
    let re = x.re.to_shape((b, c * f, t)).unwrap();
    let im = x.im.to_shape((b, c * f, t)).unwrap();
    ndarray::concatenate![ndarray::Axis(1), re, im]
}

fn unflatten_features(x: &Array3<f64>, c: usize, f: usize) -> ComplexTensor {
    let (b, _, t) = x.dim();
    let n = c * f;
    ComplexTensor {
        re: x
            .slice(s![.., ..n, ..])
            .to_owned()
            .into_shape_with_order((b, c, f, t))
            .unwrap(),
        im: x
            .slice(s![.., n.., ..])
            .to_owned()
            .into_shape_with_order((b, c, f, t))
            .unwrap(),
    }
}

/// Applies a per-frame linear map to `[B, D_in, T]`.
fn frame_linear(l: &Linear, x: &Array3<f64>) -> (Array3<f64>, Vec<ndarray::Array2<f64>>) {
    let (b, _, t) = x.dim();
    let mut out = Array3::zeros((b, l.d_out(), t));
    let mut rows = Vec::with_capacity(b);
    for bi in 0..b {
        let r = x.slice(s![bi, .., ..]).t().to_owned();
        out.slice_mut(s![bi, .., ..]).assign(&l.forward(&r).t());
        rows.push(r);
    }
    (out, rows)
}

fn frame_linear_backward(
    l: &Linear,
    rows: &[ndarray::Array2<f64>],
    dy: &Array3<f64>,
    grad: &mut Linear,
) -> Array3<f64> {
    let (b, _, t) = dy.dim();
    let mut dx = Array3::zeros((b, l.d_in(), t));
    for bi in 0..b {
        let d = dy.slice(s![bi, .., ..]).t().to_owned();
        dx.slice_mut(s![bi, .., ..])
            .assign(&l.backward(&rows[bi], &d, grad).t());
    }
    dx
}

/// `a ⊙ b` in complex arithmetic, broadcasting nothing.
fn complex_mul(a: &ComplexTensor, b: &ComplexTensor) -> ComplexTensor {
    ComplexTensor {
        re: &a.re * &b.re - &a.im * &b.im,
        im: &a.re * &b.im + &a.im * &b.re,
    }
}

/// Gradient of `a ⊙ b` with respect to `b`.
fn complex_mul_grad(a: &ComplexTensor, dy: &ComplexTensor) -> ComplexTensor {
    ComplexTensor {
        re: &dy.re * &a.re + &dy.im * &a.im,
        im: &dy.im * &a.re - &dy.re * &a.im,
    }
}

impl Model {
    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let depth = cfg.depth();
        let ch = &cfg.encoder_channels;
        let freqs = cfg.freq_ladder();
        let enc_geom = encoder_geometry(cfg);
        let dec_geom = decoder_geometry(cfg);
        let sep = cfg.variant.separable();

        let mut encoder = Vec::with_capacity(depth);
        let mut ftb = Vec::with_capacity(depth);
        let mut skip = Vec::with_capacity(depth);
        for i in 0..depth {
            let c_in = if i == 0 { 1 } else { ch[i - 1] };
            let conv = if sep {
                SpatialConv::Separable(DscConv2d::new(c_in, ch[i], cfg.kernel, enc_geom, &mut rng))
            } else {
                SpatialConv::Standard(ComplexConv2d::new(c_in, ch[i], cfg.kernel, enc_geom, &mut rng))
            };
            encoder.push(EncoderBlock {
                conv,
                norm: ComplexLayerNorm::new(ch[i]),
            });
            ftb.push(
                cfg.variant
                    .has_ftb(i, depth)
                    .then(|| Ftb::new(ch[i], freqs[i + 1], cfg.ftb_order, &mut rng)),
            );
            skip.push(ComplexConv2d::pointwise(ch[i], ch[i], &mut rng));
        }

        let flat = 2 * ch[depth - 1] * freqs[depth];
        let d = cfg.datrnn_dim;
        let in_proj = Linear::new(flat, d, &mut rng);
        let datrnn = (0..cfg.datrnn_blocks)
            .map(|_| DatRnnBlock::new(d, cfg.lstm_hidden, cfg.chunk_len, cfg.mask_target, &mut rng))
            .collect();
        let out_proj = Linear::new(d, flat, &mut rng);

        let mut decoder = Vec::with_capacity(depth);
        for i in 0..depth {
            let c_in = 2 * ch[i];
            let c_out = if i == 0 { 1 } else { ch[i - 1] };
            let deconv = if sep {
                SpatialConvTranspose::Separable(DscConvTranspose2d::new(c_in, c_out, cfg.kernel, dec_geom, &mut rng))
            } else {
                SpatialConvTranspose::Standard(ComplexConvTranspose2d::new(c_in, c_out, cfg.kernel, dec_geom, &mut rng))
            };
            decoder.push(DecoderBlock {
                deconv,
                norm: (i > 0).then(|| ComplexLayerNorm::new(c_out)),
            });
        }

        Ok(Self {
            config: cfg.clone(),
            encoder,
            ftb,
            skip,
            in_proj,
            datrnn,
            out_proj,
            decoder,
        })
    }

    pub fn count_params(&self) -> usize {
        self.num_params()
    }

    pub fn ftb_count(&self) -> usize {
        self.ftb.iter().filter(|f| f.is_some()).count()
    }

    /// Number of standard (non-separable) spatial convolutions in the encoder and decoder.
    pub fn standard_conv_count(&self) -> usize {
        self.encoder.iter().filter(|e| e.conv.is_standard()).count()
            + self.decoder.iter().filter(|d| d.deconv.is_standard()).count()
    }

    pub fn forward_tensor(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &ComplexTensor) -> Result<(ComplexTensor, ModelCache)> {
        let cfg = &self.config;
        if x.channels() != 1 || x.freq() != cfg.stft.n_bins() {
            return Err(Error::ShapeMismatch(format!(
                "model expects [B, 1, {}, T] input, got {:?}",
                cfg.stft.n_bins(),
                x.dim()
            )));
        }
        if x.time() == 0 {
            return Err(Error::Empty("spectrogram frames"));
        }
        let mut enc_caches = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for (blk, ftb) in self.encoder.iter().zip(&self.ftb) {
            let conv_out = blk.conv.forward(&h)?;
            let (normed, norm) = blk.norm.forward(&conv_out);
            let act = complex_activation(&normed);
            let (out, fc) = match ftb {
                Some(f) => {
                    let (o, c) = f.forward_cached(&act)?;
                    (o, Some((c, act)))
                }
                None => (act, None),
            };
            enc_caches.push(EncoderCache {
                input: h,
                norm,
                normed,
                ftb: fc,
                out: out.clone(),
            });
            h = out;
        }

        let deepest = &enc_caches.last().unwrap().out;
        let (_, c_last, f_last, _) = deepest.dim();
        let (mut z, flat_in) = frame_linear(&self.in_proj, &flatten_features(deepest));
        let mut blocks = Vec::with_capacity(self.datrnn.len());
        for b in &self.datrnn {
            let (y, c) = b.forward_cached(&z)?;
            z = y;
            blocks.push(c);
        }
        let (flat_out, rnn_rows) = frame_linear(&self.out_proj, &z);
        let mut h = unflatten_features(&flat_out, c_last, f_last);

        let mut dec_caches: Vec<DecoderCache> = Vec::with_capacity(self.decoder.len());
        for i in (0..self.decoder.len()).rev() {
            let skip = self.skip[i].forward(&enc_caches[i].out)?;
            let input = ComplexTensor::concat_channels(&h, &skip)?;
            let y = self.decoder[i].deconv.forward(&input)?;
            let (out, norm) = match &self.decoder[i].norm {
                Some(n) => {
                    let (normed, c) = n.forward(&y);
                    (complex_activation(&normed), Some((c, normed)))
                }
                None => (y, None),
            };
            dec_caches.push(DecoderCache { input, norm });
            h = out;
        }
        dec_caches.reverse();

        let out = match cfg.output_mode {
            OutputMode::Direct => h.clone(),
            OutputMode::Crm => complex_mul(x, &h),
        };
        Ok((
            out,
            ModelCache {
                input: x.clone(),
                encoder: enc_caches,
                flat_in,
                blocks,
                rnn_rows,
                decoder: dec_caches,
                head: h,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad`; returns the input gradient.
    pub fn backward(&self, cache: &ModelCache, dy: &ComplexTensor, grad: &mut Self) -> Result<ComplexTensor> {
        let depth = self.encoder.len();
        let (mut dh, mut dx) = match self.config.output_mode {
            OutputMode::Direct => (dy.clone(), None),
            OutputMode::Crm => (
                complex_mul_grad(&cache.input, dy),
                Some(complex_mul_grad(&cache.head, dy)),
            ),
        };

        let mut d_enc_out: Vec<Option<ComplexTensor>> = vec![None; depth];
        for i in 0..depth {
            let dc = &cache.decoder[i];
            let d_y = match (&self.decoder[i].norm, &dc.norm, grad.decoder[i].norm.as_mut()) {
                (Some(n), Some((nc, normed)), Some(g)) => {
                    let d_normed = complex_activation_backward(normed, &dh);
                    n.backward(nc, &d_normed, g)
                }
                _ => dh,
            };
            let d_in = self.decoder[i]
                .deconv
                .backward(&dc.input, &d_y, &mut grad.decoder[i].deconv)?;
            let c_h = d_in.channels() / 2;
            let (d_h, d_skip) = d_in.split_channels(c_h);
            let d_e = self.skip[i].backward(&cache.encoder[i].out, &d_skip, &mut grad.skip[i])?;
            d_enc_out[i] = Some(d_e);
            dh = d_h;
        }

        let d_flat_out = flatten_features(&dh);
        let mut dz = frame_linear_backward(&self.out_proj, &cache.rnn_rows, &d_flat_out, &mut grad.out_proj);
        for (k, b) in self.datrnn.iter().enumerate().rev() {
            dz = b.backward(&cache.blocks[k], &dz, &mut grad.datrnn[k])?;
        }
        let d_deep_flat = frame_linear_backward(&self.in_proj, &cache.flat_in, &dz, &mut grad.in_proj);
        let deepest = &cache.encoder[depth - 1].out;
        let mut d_out = unflatten_features(&d_deep_flat, deepest.channels(), deepest.freq());

        for i in (0..depth).rev() {
            if let Some(d) = d_enc_out[i].take() {
                d_out.add_assign(&d);
            }
            let ec = &cache.encoder[i];
            let d_act = match (&self.ftb[i], &ec.ftb, grad.ftb[i].as_mut()) {
                (Some(f), Some((fc, act)), Some(g)) => f.backward(act, fc, &d_out, g)?,
                _ => d_out,
            };
            let d_normed = complex_activation_backward(&ec.normed, &d_act);
            let d_conv = self.encoder[i]
                .norm
                .backward(&ec.norm, &d_normed, &mut grad.encoder[i].norm);
            d_out = self.encoder[i]
                .conv
                .backward(&ec.input, &d_conv, &mut grad.encoder[i].conv)?;
        }
        match dx.as_mut() {
            Some(d) => {
                d.add_assign(&d_out);
                Ok(dx.unwrap())
            }
            None => Ok(d_out),
        }
    }

    /// Maps a noisy complex spectrogram to an enhanced one of the same shape.
    pub fn forward(&self, noisy: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
        if noisy.config != self.config.stft {
            return Err(Error::ShapeMismatch(
                "spectrogram framing does not match the model configuration".into(),
            ));
        }
        let y = self.forward_tensor(&spectrogram_tensor(noisy))?;
        Ok(tensor_spectrogram(&y, noisy))
    }

    pub fn enhance(&self, w: &Waveform) -> Result<Waveform> {
        let spec = stft(w, &self.config.stft)?;
        istft(&self.forward(&spec)?, w.len())
    }

    /// Parameters under [`MODEL_PREFIX`] with the configuration embedded as metadata.
    pub fn to_container(&self) -> Result<ParamContainer> {
        let meta = serde_json::json!({ MODEL_CONFIG_KEY: serde_json::to_value(&self.config)? });
        Ok(ParamContainer::from_params(meta, self, MODEL_PREFIX))
    }

    /// Rebuilds a model from any container holding an embedded configuration,
    /// including training checkpoints.
    pub fn from_container(c: &ParamContainer) -> Result<Self> {
        let cfg = c
            .meta
            .get(MODEL_CONFIG_KEY)
            .ok_or_else(|| Error::Format("container has no model configuration".into()))?;
        let cfg: ModelConfig = serde_json::from_value(cfg.clone())?;
        let mut model = Self::build(&cfg)?;
        c.load_into(&mut model, MODEL_PREFIX)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_container(&ParamContainer::read(path)?)
    }
}

/// Wraps a spectrogram as a `[1, 1, F, T]` tensor.
pub fn spectrogram_tensor(s: &ComplexSpectrogram) -> ComplexTensor {
    let (f, t) = s.real.dim();
    ComplexTensor {
        re: s.real.clone().into_shape_with_order((1, 1, f, t)).unwrap(),
        im: s.imag.clone().into_shape_with_order((1, 1, f, t)).unwrap(),
    }
}

/// Unwraps batch item 0, channel 0 with the framing of `like`.
pub fn tensor_spectrogram(t: &ComplexTensor, like: &ComplexSpectrogram) -> ComplexSpectrogram {
    ComplexSpectrogram {
        real: t.re.slice(s![0, 0, .., ..]).to_owned(),
        imag: t.im.slice(s![0, 0, .., ..]).to_owned(),
        config: like.config,
        original_length: like.original_length,
    }
}
