use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{sisdr_samples, sisdr_with_grad};
use crate::signal_io::Waveform;
use crate::stft::{istft, istft_backward, ComplexSpectrogram};

/// Which terms of the training objective are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `−SI-SDR/10 + α·L1(|E|, |C|)`.
    #[default]
    Combined,
    /// `−SI-SDR/10` only.
    Waveform,
    /// `L1(|E|, |C|)` only.
    Spectral,
}

impl LossKind {
    fn weights(self, alpha: f64) -> (f64, f64) {
        match self {
            LossKind::Combined => (1.0, alpha),
            LossKind::Waveform => (1.0, 0.0),
            LossKind::Spectral => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub sisdr_db: f64,
    pub spectral: f64,
}

/// Mean absolute difference of spectral magnitudes.
pub fn spectral_l1(estimate: &ComplexSpectrogram, reference: &ComplexSpectrogram) -> Result<f64> {
    if estimate.real.dim() != reference.real.dim() {
        return Err(Error::shape(format!(
            "spectrogram shapes differ: {:?} vs {:?}",
            estimate.real.dim(),
            reference.real.dim()
        )));
    }
    let diff = (estimate.magnitude() - reference.magnitude()).mapv(f64::abs);
    Ok(diff.mean().unwrap_or(0.0))
}

/// `−SI-SDR(clean, enh)/10 + alpha·L1(|enh_spec|, |clean_spec|)`.
pub fn loss(
    enh_wave: &Waveform,
    clean_wave: &Waveform,
    enh_spec: &ComplexSpectrogram,
    clean_spec: &ComplexSpectrogram,
    alpha: f64,
) -> Result<f64> {
    let s = sisdr_samples(&clean_wave.samples, &enh_wave.samples)?;
    Ok(-s / 10.0 + alpha * spectral_l1(enh_spec, clean_spec)?)
}

/// Loss of an enhanced spectrogram, resynthesized to the clean length, and
/// its gradient with respect to the real and imaginary planes.
pub fn loss_and_grad(
    enh_spec: &ComplexSpectrogram,
    clean_wave: &Waveform,
    clean_spec: &ComplexSpectrogram,
    alpha: f64,
    kind: LossKind,
) -> Result<(LossTerms, ComplexSpectrogram)> {
    let (w_wave, w_spec) = kind.weights(alpha);
    let enh_wave = istft(enh_spec, clean_wave.len())?;
    let (sisdr_db, g_wave) = sisdr_with_grad(&clean_wave.samples, &enh_wave.samples)?;
    let spectral = spectral_l1(enh_spec, clean_spec)?;

    let scaled: Vec<f64> = g_wave.iter().map(|g| -w_wave * g / 10.0).collect();
    let (mut d_re, mut d_im) = istft_backward(&scaled, enh_spec.n_frames(), &enh_spec.config);
    if w_spec != 0.0 {
        let scale = w_spec / enh_spec.real.len() as f64;
        let clean_mag = clean_spec.magnitude();
        Zip::from(&mut d_re)
            .and(&mut d_im)
            .and(&enh_spec.real)
            .and(&enh_spec.imag)
            .and(&clean_mag)
            .for_each(|dr, di, &re, &im, &c| {
                let mag = re.hypot(im);
                if mag > 0.0 {
                    let s = scale * (mag - c).signum() * f64::from(mag != c);
                    *dr += s * re / mag;
                    *di += s * im / mag;
                }
            });
    }
    let grad = ComplexSpectrogram {
        real: d_re,
        imag: d_im,
        config: enh_spec.config,
        original_length: enh_spec.original_length,
    };
    let terms = LossTerms {
        total: -w_wave * sisdr_db / 10.0 + w_spec * spectral,
        sisdr_db,
        spectral,
    };
    Ok((terms, grad))
}
