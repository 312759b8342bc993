use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attention, attention_backward, AttentionOutput};
use super::linear::{LayerNorm, Linear, LnCache};
use super::lstm::{reverse_rows, Lstm, LstmCache};
use crate::complex_nn::sigmoid;
use crate::error::Result;

/// What the mask multiplies. The input is always added back as a residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskTarget {
    #[default]
    Input,
    /// The projected recurrent features.
    Recurrent,
}

/// One recurrent-attention pass over sequences `[steps × d]`: a (Bi-)LSTM
/// projected back to `d`, layer norm, key and query projections, scaled
/// dot-product attention and a sigmoid mask head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPath {
    pub rnn_fwd: Lstm,
    pub rnn_bwd: Option<Lstm>,
    pub proj: Linear,
    pub ln: LayerNorm,
    pub key: Linear,
    pub query: Linear,
    pub mask: Linear,
    pub causal: bool,
    pub mask_target: MaskTarget,
}

crate::impl_parameters!(AttentionPath {} nested { rnn_fwd, rnn_bwd, proj, ln, key, query, mask });

pub struct Encoded {
    fwd: LstmCache,
    bwd: Option<LstmCache>,
    rnn_out: Array2<f64>,
    /// Projected recurrent features.
    pub recurrent: Array2<f64>,
    ln: LnCache,
    normalized: Array2<f64>,
    pub keys: Array2<f64>,
    pub queries: Array2<f64>,
}

pub struct PathCache {
    enc: Encoded,
    att: AttentionOutput,
    mask_in: Array2<f64>,
    /// Mask values in `[0, 1]`.
    pub mask: Array2<f64>,
}

/// `M = σ(head([C, H_Q]))`, `enhanced = target ⊙ M + residual`.
pub fn mask_and_enhance(
    context: &Array2<f64>,
    queries: &Array2<f64>,
    target: &Array2<f64>,
    residual: &Array2<f64>,
    head: &Linear,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mask_in = concatenate![Axis(1), *context, *queries];
    let m = head.forward(&mask_in).mapv(sigmoid);
    let out = target * &m + residual;
    (out, m, mask_in)
}

/// Input gradients of [`mask_and_enhance`].
pub struct MaskGrads {
    pub context: Array2<f64>,
    pub queries: Array2<f64>,
    pub target: Array2<f64>,
    pub residual: Array2<f64>,
}

/// Backward of [`mask_and_enhance`]; accumulates head gradients into `grad_head`.
pub fn mask_and_enhance_backward(
    mask_in: &Array2<f64>,
    mask: &Array2<f64>,
    target: &Array2<f64>,
    dout: &Array2<f64>,
    head: &Linear,
    grad_head: &mut Linear,
) -> MaskGrads {
    let d = target.ncols();
    let d_logit = dout * target * &mask.mapv(|v| v * (1.0 - v));
    let d_mask_in = head.backward(mask_in, &d_logit, grad_head);
    MaskGrads {
        context: d_mask_in.slice(s![.., ..d]).to_owned(),
        queries: d_mask_in.slice(s![.., d..]).to_owned(),
        target: dout * mask,
        residual: dout.clone(),
    }
}

impl AttentionPath {
    pub fn new(
        d: usize,
        hidden: usize,
        bidirectional: bool,
        causal: bool,
        mask_target: MaskTarget,
        rng: &mut impl Rng,
    ) -> Self {
        let rnn_fwd = Lstm::new(d, hidden, rng);
        let rnn_bwd = bidirectional.then(|| Lstm::new(d, hidden, rng));
        let width = if bidirectional { 2 * hidden } else { hidden };
        Self {
            rnn_fwd,
            rnn_bwd,
            proj: Linear::new(width, d, rng),
            ln: LayerNorm::new(d),
            key: Linear::new(d, d, rng),
            query: Linear::new(d, d, rng),
            mask: Linear::new(2 * d, d, rng),
            causal,
            mask_target,
        }
    }

    pub fn dim(&self) -> usize {
        self.proj.d_out()
    }

    /// Recurrent encoding followed by layer norm and the key and query projections.
    pub fn encode(&self, x: &Array2<f64>) -> Encoded {
        let (hf, fwd) = self.rnn_fwd.forward(x);
        let (rnn_out, bwd) = match &self.rnn_bwd {
            Some(l) => {
                let (hb, cb) = l.forward(&reverse_rows(x));
                (concatenate![Axis(1), hf, reverse_rows(&hb)], Some(cb))
            }
            None => (hf, None),
        };
        let recurrent = self.proj.forward(&rnn_out);
        let (normalized, ln) = self.ln.forward(&recurrent);
        let keys = self.key.forward(&normalized);
        let queries = self.query.forward(&normalized);
        Encoded {
            fwd,
            bwd,
            rnn_out,
            recurrent,
            ln,
            normalized,
            keys,
            queries,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, PathCache)> {
        let enc = self.encode(x);
        let att = attention(&enc.keys, &enc.queries, self.causal)?;
        let target = match self.mask_target {
            MaskTarget::Input => x,
            MaskTarget::Recurrent => &enc.recurrent,
        };
        let (out, mask, mask_in) = mask_and_enhance(&att.context, &enc.queries, target, x, &self.mask);
        Ok((
            out,
            PathCache {
                enc,
                att,
                mask_in,
                mask,
            },
        ))
    }

    pub fn backward(&self, x: &Array2<f64>, cache: &PathCache, dout: &Array2<f64>, grad: &mut Self) -> Array2<f64> {
        let enc = &cache.enc;
        let target = match self.mask_target {
            MaskTarget::Input => x,
            MaskTarget::Recurrent => &enc.recurrent,
        };
        let mg = mask_and_enhance_backward(&cache.mask_in, &cache.mask, target, dout, &self.mask, &mut grad.mask);
        let (d_keys, d_q_att) = attention_backward(&enc.keys, &enc.queries, &cache.att, &mg.context);
        let d_queries = d_q_att + &mg.queries;
        let d_norm = self.key.backward(&enc.normalized, &d_keys, &mut grad.key)
            + self.query.backward(&enc.normalized, &d_queries, &mut grad.query);
        let mut d_rec = self.ln.backward(&enc.ln, &d_norm, &mut grad.ln);
        let mut dx = mg.residual;
        match self.mask_target {
            MaskTarget::Input => dx += &mg.target,
            MaskTarget::Recurrent => d_rec += &mg.target,
        }
        let d_rnn = self.proj.backward(&enc.rnn_out, &d_rec, &mut grad.proj);
        let h = self.rnn_fwd.hidden();
        dx += &self
            .rnn_fwd
            .backward(&enc.fwd, &d_rnn.slice(s![.., ..h]).to_owned(), &mut grad.rnn_fwd);
        if let (Some(l), Some(c), Some(g)) = (&self.rnn_bwd, &enc.bwd, grad.rnn_bwd.as_mut()) {
            let d_rev = reverse_rows(&d_rnn.slice(s![.., h..]).to_owned());
            dx += &reverse_rows(&l.backward(c, &d_rev, g));
        }
        dx
    }
}
