use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Attention weights `W` and context `C` for keys and queries `[steps × d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub weights: Array2<f64>,
    pub context: Array2<f64>,
}

/// Scaled dot-product attention. Row `k` of the weights is a softmax of
/// `⟨H_j^K, H_k^Q⟩ / √d` over `j ≤ k` when `causal`, otherwise over all `j`.
/// The context is `C_k = Σ_j W[k, j] · H_j^K`.
pub fn attention(keys: &Array2<f64>, queries: &Array2<f64>, causal: bool) -> Result<AttentionOutput> {
    if keys.dim() != queries.dim() {
        return Err(Error::ShapeMismatch(format!(
            "keys {:?} vs queries {:?}",
            keys.dim(),
            queries.dim()
        )));
    }
    let scale = 1.0 / (keys.ncols() as f64).sqrt();
    let mut w = queries.dot(&keys.t()) * scale;
    for (k, mut row) in w.outer_iter_mut().enumerate() {
        let admitted = if causal { k + 1 } else { row.len() };
        let max = row.iter().take(admitted).cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            *v = if j < admitted { (*v - max).exp() } else { 0.0 };
            sum += *v;
        }
        row.mapv_inplace(|v| v / sum);
    }
    let context = w.dot(keys);
    Ok(AttentionOutput { weights: w, context })
}

/// Returns `(d_keys, d_queries)` given the gradient of the context.
pub fn attention_backward(
    keys: &Array2<f64>,
    queries: &Array2<f64>,
    out: &AttentionOutput,
    d_context: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let scale = 1.0 / (keys.ncols() as f64).sqrt();
    let w = &out.weights;
    let dw = d_context.dot(&keys.t());
    let row_dot = (&dw * w).sum_axis(Axis(1)).insert_axis(Axis(1));
    let ds = w * &(&dw - &row_dot) * scale;
    let d_queries = ds.dot(keys);
    let d_keys = w.t().dot(d_context) + ds.t().dot(queries);
    (d_keys, d_queries)
}
