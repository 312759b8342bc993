use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{ace_window, loudness_inverse, AceConfig, Electrodogram, ACE_FFT_SIZE};
use crate::error::{Error, Result};
use crate::signal_io::{Waveform, SAMPLE_RATE};

/// Noise-band vocoder. Every frame synthesizes random-phase noise confined
/// to the FFT bins of each active band, with band level equal to its
/// envelope, then windows and overlap-adds the frames with power
/// normalization. Output scales linearly with the envelopes for a fixed seed.
pub fn vocode_envelopes(env: &Array2<f64>, cfg: &AceConfig, len: usize, seed: u64) -> Result<Waveform> {
    cfg.validate()?;
    let (m, frames) = env.dim();
    if m != cfg.n_electrodes {
        return Err(Error::shape(format!(
            "{m} envelope rows for {} electrodes",
            cfg.n_electrodes
        )));
    }
    let n = ACE_FFT_SIZE;
    let window = ace_window();
    let bands = cfg.band_bins();
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for k in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (e, range) in bands.iter().enumerate() {
            // sinusoid amplitude per bin, so the band's root-sum-square is the envelope
            let per_bin = env[[e, k]] / (range.len() as f64).sqrt();
            for j in range.clone() {
                let phase = rng.gen_range(0.0..2.0 * PI);
                let c = Complex::from_polar(per_bin / 2.0, phase);
                buf[j] = c;
                buf[n - j] = c.conj();
            }
        }
        ifft.process(&mut buf);
        let centre = (k as f64 * SAMPLE_RATE as f64 / cfg.channel_rate).round() as i64;
        let start = centre - (n / 2) as i64;
        for (i, w) in window.iter().enumerate() {
            let idx = start + i as i64;
            if idx >= 0 && (idx as usize) < len {
                out[idx as usize] += w * buf[i].re;
                norm[idx as usize] += w * w;
            }
        }
    }
    let samples = out
        .iter()
        .zip(&norm)
        .map(|(y, s)| if *s > 1e-12 { y / s.sqrt() } else { 0.0 })
        .collect();
    Waveform::new(samples, SAMPLE_RATE)
}

/// Vocodes the pulse pattern: each pulse amplitude is mapped back to an
/// envelope through the inverse loudness function.
pub fn vocode(eg: &Electrodogram, seed: u64) -> Result<Waveform> {
    let cfg = &eg.config;
    let mut env = Array2::zeros((cfg.n_electrodes, eg.n_frames));
    for p in &eg.pulses {
        env[[p.electrode - 1, p.frame]] = loudness_inverse(p.amplitude, cfg);
    }
    let len = (eg.duration * SAMPLE_RATE as f64).round() as usize;
    vocode_envelopes(&env, cfg, len, seed)
}
