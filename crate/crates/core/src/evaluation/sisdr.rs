use crate::error::{Error, Result};
use crate::signal_io::Waveform;

/// Magnitude bound on reported SI-SDR values, in dB.
pub const SISDR_CAP_DB: f64 = 60.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let rr = dot(reference, reference);
    if rr == 0.0 {
        return Err(Error::ZeroPower("reference"));
    }
    Ok(rr)
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to
/// `[-SISDR_CAP_DB, SISDR_CAP_DB]`.
pub fn sisdr_samples(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    Ok(sisdr_with_grad(reference, estimate)?.0)
}

pub fn sisdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    sisdr_samples(&reference.samples, &estimate.samples)
}

/// SI-SDR and its gradient with respect to the estimate. The gradient is
/// zero wherever the value is clamped.
pub fn sisdr_with_grad(reference: &[f64], estimate: &[f64]) -> Result<(f64, Vec<f64>)> {
    let rr = check(reference, estimate)?;
    let alpha = dot(estimate, reference) / rr;
    let target: Vec<f64> = reference.iter().map(|r| alpha * r).collect();
    let residual: Vec<f64> = estimate.iter().zip(&target).map(|(e, t)| e - t).collect();
    let tt = dot(&target, &target);
    let nn = dot(&residual, &residual);
    let zero = vec![0.0; estimate.len()];
    if nn == 0.0 || tt == 0.0 {
        let v = if tt == 0.0 { -SISDR_CAP_DB } else { SISDR_CAP_DB };
        return Ok((v, zero));
    }
    let value = 10.0 * (tt / nn).log10();
    if value.abs() >= SISDR_CAP_DB {
        return Ok((value.clamp(-SISDR_CAP_DB, SISDR_CAP_DB), zero));
    }
    let k = 10.0 / std::f64::consts::LN_10;
    let grad = reference
        .iter()
        .zip(&residual)
        .map(|(r, n)| k * (2.0 * alpha * r / tt - 2.0 * n / nn))
        .collect();
    Ok((value, grad))
}
