use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

pub const LSD_EPS: f64 = 1e-8;

/// Log-spectral distance in dB: the frame mean of the RMS difference of
/// `20·log10(|X| + ε)` over bins.
pub fn lsd(reference: &ComplexSpectrogram, estimate: &ComplexSpectrogram) -> Result<f64> {
    if reference.real.dim() != estimate.real.dim() {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram shapes {:?} and {:?}",
            reference.real.dim(),
            estimate.real.dim()
        )));
    }
    let (bins, frames) = reference.real.dim();
    if bins == 0 || frames == 0 {
        return Err(Error::Empty("spectrogram"));
    }
    let log_mag = |s: &ComplexSpectrogram| s.magnitude().mapv(|m| 20.0 * (m + LSD_EPS).log10());
    let diff = log_mag(reference) - log_mag(estimate);
    let total: f64 = diff
        .columns()
        .into_iter()
        .map(|col| (col.iter().map(|d| d * d).sum::<f64>() / bins as f64).sqrt())
        .sum();
    Ok(total / frames as f64)
}
