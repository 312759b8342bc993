use ndarray::{s, Array3, Array4};

use crate::error::{Error, Result};

/// Features cut into half-overlapping chunks, `[batch, d, n_chunks, chunk_len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedFeatures {
    pub data: Array4<f64>,
    pub chunk_len: usize,
    pub hop: usize,
    pub pad_frames: usize,
}

impl ChunkedFeatures {
    pub fn n_chunks(&self) -> usize {
        self.data.dim().2
    }

    pub fn padded_len(&self) -> usize {
        (self.n_chunks() - 1) * self.hop + self.chunk_len
    }

    pub fn original_len(&self) -> usize {
        self.padded_len() - self.pad_frames
    }

    /// Same layout with different chunk data.
    pub fn with_data(&self, data: Array4<f64>) -> Self {
        Self {
            data,
            chunk_len: self.chunk_len,
            hop: self.hop,
            pad_frames: self.pad_frames,
        }
    }
}

/// Number of chunks and right padding for `frames` frames.
pub fn chunk_layout(frames: usize, chunk_len: usize) -> (usize, usize) {
    let hop = chunk_len / 2;
    let extra = frames.saturating_sub(chunk_len);
    let n = 1 + extra.div_ceil(hop);
    let padded = (n - 1) * hop + chunk_len;
    (n, padded - frames)
}

fn check_chunk_len(p: usize) -> Result<()> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "chunk length must be even and at least 2, got {p}"
        )));
    }
    Ok(())
}

pub fn segment(x: &Array3<f64>, chunk_len: usize) -> Result<ChunkedFeatures> {
    check_chunk_len(chunk_len)?;
    let (b, d, t) = x.dim();
    if t == 0 {
        return Err(Error::Empty("feature sequence"));
    }
    let hop = chunk_len / 2;
    let (n, pad) = chunk_layout(t, chunk_len);
    let mut data = Array4::zeros((b, d, n, chunk_len));
    for c in 0..n {
        let start = c * hop;
        let end = (start + chunk_len).min(t);
        if start < end {
            data.slice_mut(s![.., .., c, ..end - start])
                .assign(&x.slice(s![.., .., start..end]));
        }
    }
    Ok(ChunkedFeatures {
        data,
        chunk_len,
        hop,
        pad_frames: pad,
    })
}

fn overlap_counts(c: &ChunkedFeatures) -> Vec<f64> {
    let mut counts = vec![0.0; c.padded_len()];
    for k in 0..c.n_chunks() {
        for v in &mut counts[k * c.hop..k * c.hop + c.chunk_len] {
            *v += 1.0;
        }
    }
    counts
}

fn validate(c: &ChunkedFeatures) -> Result<()> {
    let (_, _, n, p) = c.data.dim();
    if p != c.chunk_len || c.hop * 2 != p || n == 0 || c.pad_frames >= p {
        return Err(Error::ShapeMismatch(format!(
            "inconsistent chunk metadata: data {:?}, chunk_len {}, hop {}, pad {}",
            c.data.dim(),
            c.chunk_len,
            c.hop,
            c.pad_frames
        )));
    }
    Ok(())
}

fn overlap_add(c: &ChunkedFeatures, divide: bool) -> Result<Array3<f64>> {
    validate(c)?;
    let (b, d, n, p) = c.data.dim();
    let mut acc = Array3::zeros((b, d, c.padded_len()));
    for k in 0..n {
        let mut dst = acc.slice_mut(s![.., .., k * c.hop..k * c.hop + p]);
        dst += &c.data.slice(s![.., .., k, ..]);
    }
    if divide {
        for (t, cnt) in overlap_counts(c).into_iter().enumerate() {
            acc.slice_mut(s![.., .., t]).mapv_inplace(|v| v / cnt);
        }
    }
    Ok(acc.slice(s![.., .., ..c.original_len()]).to_owned())
}

/// Overlap-add with division by the per-frame overlap count; strips padding.
pub fn merge(c: &ChunkedFeatures) -> Result<Array3<f64>> {
    overlap_add(c, true)
}

/// Adjoint of [`segment`]: sums chunk gradients back onto frames.
pub(crate) fn segment_backward(d_chunks: &ChunkedFeatures) -> Result<Array3<f64>> {
    overlap_add(d_chunks, false)
}

/// Adjoint of [`merge`].
pub(crate) fn merge_backward(dy: &Array3<f64>, like: &ChunkedFeatures) -> Result<ChunkedFeatures> {
    let counts = overlap_counts(like);
    let mut scaled = dy.clone();
    for (t, cnt) in counts.iter().take(dy.dim().2).enumerate() {
        scaled.slice_mut(s![.., .., t]).mapv_inplace(|v| v / cnt);
    }
    segment(&scaled, like.chunk_len)
}
