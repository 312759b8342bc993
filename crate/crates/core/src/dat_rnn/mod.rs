//! Dual-path attention RNN bottleneck.
//!
//! Frame features `[batch, d, T]` are layer-normalized, cut into
//! half-overlapping chunks of `P` frames and processed twice: an intra-chunk
//! pass (Bi-LSTM with attention over the whole chunk) and an inter-chunk pass
//! (LSTM with causal attention along the chunk axis, one sequence per position
//! within the chunk). Each pass derives a sigmoid mask from the attention
//! context and the queries and applies it with a residual connection. Chunks
//! are merged back by overlap-add.

mod attention;
mod chunk;
mod linear;
mod lstm;
mod path;

pub use attention::{attention, attention_backward, AttentionOutput};
pub use chunk::{chunk_layout, merge, segment, ChunkedFeatures};
pub use linear::{LayerNorm, Linear, LnCache};
pub use lstm::{lstm_param_count, Lstm, LstmCache};
pub use path::{mask_and_enhance, mask_and_enhance_backward, AttentionPath, Encoded, MaskGrads, MaskTarget, PathCache};

use ndarray::{s, Array2, Array3, Array4};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatRnnBlock {
    pub pre_ln: LayerNorm,
    pub intra: AttentionPath,
    pub inter: AttentionPath,
    pub chunk_len: usize,
}

crate::impl_parameters!(DatRnnBlock {} nested { pre_ln, intra, inter });

pub struct BlockCache {
    ln: Vec<LnCache>,
    chunks: ChunkedFeatures,
    intra_out: Array4<f64>,
    intra: Vec<PathCache>,
    inter: Vec<PathCache>,
}

fn intra_seq(data: &Array4<f64>, b: usize, c: usize) -> Array2<f64> {
    data.slice(s![b, .., c, ..]).t().to_owned()
}

fn inter_seq(data: &Array4<f64>, b: usize, p: usize) -> Array2<f64> {
    data.slice(s![b, .., .., p]).t().to_owned()
}

impl DatRnnBlock {
    pub fn new(d: usize, hidden: usize, chunk_len: usize, mask_target: MaskTarget, rng: &mut impl Rng) -> Self {
        Self {
            pre_ln: LayerNorm::new(d),
            intra: AttentionPath::new(d, hidden, true, false, mask_target, rng),
            inter: AttentionPath::new(d, hidden, false, true, mask_target, rng),
            chunk_len,
        }
    }

    pub fn dim(&self) -> usize {
        self.pre_ln.gamma.len()
    }

    /// Applies the intra pass to every chunk independently.
    pub fn intra_pass(&self, data: &Array4<f64>) -> Result<(Array4<f64>, Vec<PathCache>)> {
        let (b, _, n, _) = data.dim();
        let mut out = Array4::zeros(data.dim());
        let mut caches = Vec::with_capacity(b * n);
        for bi in 0..b {
            for c in 0..n {
                let (y, cache) = self.intra.forward(&intra_seq(data, bi, c))?;
                out.slice_mut(s![bi, .., c, ..]).assign(&y.t());
                caches.push(cache);
            }
        }
        Ok((out, caches))
    }

    /// Applies the inter pass along the chunk axis at every within-chunk position.
    pub fn inter_pass(&self, data: &Array4<f64>) -> Result<(Array4<f64>, Vec<PathCache>)> {
        let (b, _, _, p) = data.dim();
        let mut out = Array4::zeros(data.dim());
        let mut caches = Vec::with_capacity(b * p);
        for bi in 0..b {
            for pi in 0..p {
                let (y, cache) = self.inter.forward(&inter_seq(data, bi, pi))?;
                out.slice_mut(s![bi, .., .., pi]).assign(&y.t());
                caches.push(cache);
            }
        }
        Ok((out, caches))
    }

    pub fn forward(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Array3<f64>) -> Result<(Array3<f64>, BlockCache)> {
        let (b, d, t) = x.dim();
        if d != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "dual-path block expects {} features, got {d}",
                self.dim()
            )));
        }
        if t == 0 {
            return Err(Error::Empty("feature sequence"));
        }
        let mut normed = Array3::zeros(x.dim());
        let mut ln = Vec::with_capacity(b);
        for bi in 0..b {
            let (y, cache) = self.pre_ln.forward(&x.slice(s![bi, .., ..]).t().to_owned());
            normed.slice_mut(s![bi, .., ..]).assign(&y.t());
            ln.push(cache);
        }
        let chunks = segment(&normed, self.chunk_len)?;
        let (intra_out, intra) = self.intra_pass(&chunks.data)?;
        let (inter_out, inter) = self.inter_pass(&intra_out)?;
        let merged = merge(&chunks.with_data(inter_out))?;
        Ok((
            merged,
            BlockCache {
                ln,
                chunks,
                intra_out,
                intra,
                inter,
            },
        ))
    }

    pub fn backward(&self, cache: &BlockCache, dy: &Array3<f64>, grad: &mut Self) -> Result<Array3<f64>> {
        let d_chunks = chunk::merge_backward(dy, &cache.chunks)?;
        let (b, _, n, p) = d_chunks.data.dim();
        let mut d_intra_out = Array4::zeros(d_chunks.data.dim());
        for bi in 0..b {
            for pi in 0..p {
                let c = &cache.inter[bi * p + pi];
                let dseq = inter_seq(&d_chunks.data, bi, pi);
                let dx = self
                    .inter
                    .backward(&inter_seq(&cache.intra_out, bi, pi), c, &dseq, &mut grad.inter);
                d_intra_out.slice_mut(s![bi, .., .., pi]).assign(&dx.t());
            }
        }
        let mut d_in = Array4::zeros(d_chunks.data.dim());
        for bi in 0..b {
            for ci in 0..n {
                let c = &cache.intra[bi * n + ci];
                let dseq = intra_seq(&d_intra_out, bi, ci);
                let dx = self
                    .intra
                    .backward(&intra_seq(&cache.chunks.data, bi, ci), c, &dseq, &mut grad.intra);
                d_in.slice_mut(s![bi, .., ci, ..]).assign(&dx.t());
            }
        }
        let d_normed = chunk::segment_backward(&cache.chunks.with_data(d_in))?;
        let mut dx = Array3::zeros(dy.dim());
        for bi in 0..b {
            let g = self.pre_ln.backward(
                &cache.ln[bi],
                &d_normed.slice(s![bi, .., ..]).t().to_owned(),
                &mut grad.pre_ln,
            );
            dx.slice_mut(s![bi, .., ..]).assign(&g.t());
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests;
