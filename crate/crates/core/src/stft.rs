//! Short-time Fourier analysis/synthesis with periodic Hann windows at 50%
//! overlap, plus a binary spectrogram container and PNG rendering.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{Waveform, SAMPLE_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
    pub center_padding: bool,
}

impl Default for StftConfig {
    /// 32 ms frames with a 16 ms hop at 16 kHz.
    fn default() -> Self {
        Self {
            frame_len: 512,
            hop: 256,
            fft_size: 512,
            window: WindowKind::Hann,
            center_padding: true,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return Err(Error::config("frame_len must be even and at least 2"));
        }
        if self.hop * 2 != self.frame_len {
            return Err(Error::config("hop must equal frame_len / 2"));
        }
        if self.fft_size < self.frame_len {
            return Err(Error::config("fft_size must be >= frame_len"));
        }
        if self.fft_size % 2 != 0 {
            return Err(Error::config("fft_size must be even"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        let padded = self.padded_len(len);
        1 + (padded - self.frame_len) / self.hop
    }

    fn pad(&self) -> usize {
        if self.center_padding {
            self.frame_len / 2
        } else {
            0
        }
    }

    fn padded_len(&self, len: usize) -> usize {
        (len + 2 * self.pad()).max(self.frame_len)
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann_periodic(self.frame_len),
        }
    }
}

pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided complex spectrogram, `[n_bins x n_frames]` planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub real: Array2<f64>,
    pub imag: Array2<f64>,
    pub config: StftConfig,
    pub original_length: usize,
}

impl ComplexSpectrogram {
    pub fn zeros(n_bins: usize, n_frames: usize, config: StftConfig, original_length: usize) -> Self {
        Self {
            real: Array2::zeros((n_bins, n_frames)),
            imag: Array2::zeros((n_bins, n_frames)),
            config,
            original_length,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.real.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.real.ncols()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        ndarray::Zip::from(&self.real)
            .and(&self.imag)
            .map_collect(|r, i| r.hypot(*i))
    }

    pub fn energy(&self) -> f64 {
        self.real.iter().chain(self.imag.iter()).map(|v| v * v).sum()
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        if self.real.dim() != self.imag.dim() {
            return Err(Error::shape("real and imaginary planes differ in shape"));
        }
        if self.n_bins() != self.config.n_bins() {
            return Err(Error::config(format!(
                "spectrogram has {} bins but config implies {}",
                self.n_bins(),
                self.config.n_bins()
            )));
        }
        if self.n_frames() == 0 {
            return Err(Error::Empty("spectrogram has no frames"));
        }
        Ok(())
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

fn padded_signal(x: &[f64], cfg: &StftConfig) -> Vec<f64> {
    let pad = cfg.pad();
    let n = x.len();
    let mut out = Vec::with_capacity(cfg.padded_len(n));
    if pad > 0 {
        // reflect padding needs at least pad + 1 samples, otherwise zero-pad
        let reflect = n > pad;
        for i in (1..=pad).rev() {
            out.push(if reflect { x[i] } else { 0.0 });
        }
        out.extend_from_slice(x);
        for i in 0..pad {
            out.push(if reflect { x[n - 2 - i] } else { 0.0 });
        }
    } else {
        out.extend_from_slice(x);
    }
    out.resize(cfg.padded_len(n), 0.0);
    out
}

/// Forward STFT of a 16 kHz waveform.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if w.is_empty() {
        return Err(Error::Empty("waveform has no samples"));
    }
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::config(format!(
            "stft expects {SAMPLE_RATE} Hz input, got {} Hz",
            w.sample_rate
        )));
    }
    Ok(stft_samples(&w.samples, cfg))
}

pub(crate) fn stft_samples(x: &[f64], cfg: &StftConfig) -> ComplexSpectrogram {
    let padded = padded_signal(x, cfg);
    let n_frames = 1 + (padded.len() - cfg.frame_len) / cfg.hop;
    let n_bins = cfg.n_bins();
    let window = cfg.window();
    let fft = plans(cfg.fft_size).forward;
    let mut spec = ComplexSpectrogram::zeros(n_bins, n_frames, *cfg, x.len());
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for t in 0..n_frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        let start = t * cfg.hop;
        for (n, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
            b.re = padded[start + n] * w;
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            spec.real[[k, t]] = buf[k].re;
            spec.imag[[k, t]] = buf[k].im;
        }
    }
    spec
}

/// Inverse STFT by weighted overlap-add, normalized by the summed squared
/// window, cropped or zero-padded to `target_len`.
///
/// The spectrum is treated as one-sided: the imaginary parts of the DC and
/// Nyquist bins are discarded, so any input (even one that is not the STFT
/// of a real signal) yields a real waveform.
pub fn istft(s: &ComplexSpectrogram, target_len: usize) -> Result<Waveform> {
    s.check()?;
    if target_len == 0 {
        return Err(Error::Empty("target length must be positive"));
    }
    Ok(Waveform {
        samples: istft_samples(s, target_len),
        sample_rate: SAMPLE_RATE,
    })
}

fn window_norm(cfg: &StftConfig, n_frames: usize, window: &[f64]) -> Vec<f64> {
    let total = (n_frames - 1) * cfg.hop + cfg.frame_len;
    let mut wsum = vec![0.0; total];
    for t in 0..n_frames {
        for (n, w) in window.iter().enumerate() {
            wsum[t * cfg.hop + n] += w * w;
        }
    }
    wsum
}

const WSUM_FLOOR: f64 = 1e-11;

pub(crate) fn istft_samples(s: &ComplexSpectrogram, target_len: usize) -> Vec<f64> {
    let cfg = s.config;
    let n = cfg.fft_size;
    let n_frames = s.n_frames();
    let window = cfg.window();
    let ifft = plans(n).inverse;
    let wsum = window_norm(&cfg, n_frames, &window);
    let mut ola = vec![0.0; wsum.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..n_frames {
        fill_hermitian(&mut buf, s, t);
        ifft.process(&mut buf);
        for (i, w) in window.iter().enumerate() {
            ola[t * cfg.hop + i] += w * buf[i].re / n as f64;
        }
    }
    let offset = cfg.pad();
    (0..target_len)
        .map(|i| {
            let p = i + offset;
            if p < ola.len() && wsum[p] > WSUM_FLOOR {
                ola[p] / wsum[p]
            } else {
                0.0
            }
        })
        .collect()
}

fn fill_hermitian(buf: &mut [Complex<f64>], s: &ComplexSpectrogram, t: usize) {
    let n = buf.len();
    let half = n / 2;
    buf[0] = Complex::new(s.real[[0, t]], 0.0);
    buf[half] = Complex::new(s.real[[half, t]], 0.0);
    for k in 1..half {
        let c = Complex::new(s.real[[k, t]], s.imag[[k, t]]);
        buf[k] = c;
        buf[n - k] = c.conj();
    }
}

/// Adjoint of [`istft`] with respect to the spectrogram: maps a gradient on
/// the output waveform to gradients on the real and imaginary planes.
pub fn istft_backward(grad_wave: &[f64], n_frames: usize, cfg: &StftConfig) -> (Array2<f64>, Array2<f64>) {
    let n = cfg.fft_size;
    let half = n / 2;
    let window = cfg.window();
    let wsum = window_norm(cfg, n_frames, &window);
    let offset = cfg.pad();
    let mut g_ola = vec![0.0; wsum.len()];
    for (i, g) in grad_wave.iter().enumerate() {
        let p = i + offset;
        if p < g_ola.len() && wsum[p] > WSUM_FLOOR {
            g_ola[p] = g / wsum[p];
        }
    }
    let fft = plans(n).forward;
    let mut d_re = Array2::zeros((half + 1, n_frames));
    let mut d_im = Array2::zeros((half + 1, n_frames));
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..n_frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, w) in window.iter().enumerate() {
            buf[i].re = w * g_ola[t * cfg.hop + i];
        }
        fft.process(&mut buf);
        d_re[[0, t]] = buf[0].re / n as f64;
        d_re[[half, t]] = buf[half].re / n as f64;
        for k in 1..half {
            d_re[[k, t]] = 2.0 * buf[k].re / n as f64;
            d_im[[k, t]] = 2.0 * buf[k].im / n as f64;
        }
    }
    (d_re, d_im)
}

const MAGIC: &[u8; 4] = b"CSPG";
const CONTAINER_VERSION: u32 = 1;

/// Writes the binary spectrogram container: magic, version, dims, config,
/// original length, then row-major little-endian f64 real and imag planes.
pub fn write_spectrogram(path: impl AsRef<Path>, s: &ComplexSpectrogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(CONTAINER_VERSION)?;
    w.write_u32::<LittleEndian>(s.n_bins() as u32)?;
    w.write_u32::<LittleEndian>(s.n_frames() as u32)?;
    w.write_u32::<LittleEndian>(s.config.frame_len as u32)?;
    w.write_u32::<LittleEndian>(s.config.hop as u32)?;
    w.write_u32::<LittleEndian>(s.config.fft_size as u32)?;
    w.write_u8(match s.config.window {
        WindowKind::Hann => 0,
    })?;
    w.write_u8(s.config.center_padding as u8)?;
    w.write_u64::<LittleEndian>(s.original_length as u64)?;
    for plane in [&s.real, &s.imag] {
        for v in plane.iter() {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<ComplexSpectrogram> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a spectrogram container".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n_bins = r.read_u32::<LittleEndian>()? as usize;
    let n_frames = r.read_u32::<LittleEndian>()? as usize;
    let frame_len = r.read_u32::<LittleEndian>()? as usize;
    let hop = r.read_u32::<LittleEndian>()? as usize;
    let fft_size = r.read_u32::<LittleEndian>()? as usize;
    let window = match r.read_u8()? {
        0 => WindowKind::Hann,
        other => return Err(Error::Format(format!("unknown window tag {other}"))),
    };
    let center_padding = r.read_u8()? != 0;
    let original_length = r.read_u64::<LittleEndian>()? as usize;
    let config = StftConfig {
        frame_len,
        hop,
        fft_size,
        window,
        center_padding,
    };
    let mut s = ComplexSpectrogram::zeros(n_bins, n_frames, config, original_length);
    for plane in [&mut s.real, &mut s.imag] {
        for v in plane.iter_mut() {
            *v = r.read_f64::<LittleEndian>()?;
        }
    }
    s.check()?;
    Ok(s)
}

/// Grayscale log-magnitude image, low frequencies at the bottom, dB floor
/// at -80 relative to the maximum.
pub fn render_spectrogram_png(s: &ComplexSpectrogram, path: impl AsRef<Path>) -> Result<()> {
    let mag = s.magnitude();
    let (bins, frames) = mag.dim();
    let max = mag.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
    let mut img = image::GrayImage::new(frames as u32, bins as u32);
    for t in 0..frames {
        for k in 0..bins {
            let db = (20.0 * (mag[[k, t]] / max).max(1e-12).log10()).max(-80.0);
            let v = ((db + 80.0) / 80.0 * 255.0).round() as u8;
            img.put_pixel(t as u32, (bins - 1 - k) as u32, image::Luma([v]));
        }
    }
    img.save(path).map_err(|e| Error::Image(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap()
    }

    #[test]
    fn dc_signal_concentrates_in_bin_zero() {
        let w = Waveform::new(vec![1.0; 4096], 16000).unwrap();
        let cfg = StftConfig {
            center_padding: false,
            ..Default::default()
        };
        let s = stft(&w, &cfg).unwrap();
        let mag = s.magnitude();
        for t in 0..s.n_frames() {
            let dc = mag[[0, t]];
            for k in 1..s.n_bins() {
                // periodic Hann leaks DC into bin 1 only
                if k == 1 {
                    continue;
                }
                assert!(mag[[k, t]] < 1e-10 * dc, "bin {k}");
            }
        }
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let samples = (0..16000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 16000.0).sin())
            .collect();
        let s = stft(&Waveform::new(samples, 16000).unwrap(), &StftConfig::default()).unwrap();
        let mag = s.magnitude();
        let t = s.n_frames() / 2;
        let peak = (0..s.n_bins())
            .max_by(|&a, &b| mag[[a, t]].partial_cmp(&mag[[b, t]]).unwrap())
            .unwrap();
        assert_eq!(peak, 32);
    }

    #[test]
    fn frame_count_without_centering() {
        let cfg = StftConfig {
            center_padding: false,
            ..Default::default()
        };
        let s = stft(&Waveform::zeros(16000, 16000), &cfg).unwrap();
        assert_eq!(s.n_frames(), 61);
        assert_eq!(s.n_bins(), 257);
        assert_eq!(cfg.n_frames(16000), 61);
    }

    #[test]
    fn round_trip() {
        let w = random_wave(5000, 3);
        let s = stft(&w, &StftConfig::default()).unwrap();
        let r = istft(&s, w.len()).unwrap();
        let err: f64 = w.samples.iter().zip(&r.samples).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = w.samples.iter().map(|a| a * a).sum();
        assert!((err / norm).sqrt() < 1e-6);
    }

    #[test]
    fn zero_spectrogram_gives_silence() {
        let s = ComplexSpectrogram::zeros(257, 10, StftConfig::default(), 2000);
        let w = istft(&s, 2000).unwrap();
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_hermitian_input_yields_real_output() {
        let mut s = ComplexSpectrogram::zeros(257, 5, StftConfig::default(), 1024);
        // imaginary DC and Nyquist parts cannot exist in a real signal's spectrum
        s.imag[[0, 2]] = 5.0;
        s.imag[[256, 2]] = -3.0;
        let silent = istft(&s, 1024).unwrap();
        assert!(silent.samples.iter().all(|&v| v == 0.0));
        s.real[[10, 2]] = 1.0;
        s.imag[[10, 2]] = 2.0;
        let w = istft(&s, 1024).unwrap();
        assert!(w.samples.iter().all(|v| v.is_finite()));
        assert!(w.samples.iter().any(|&v| v != 0.0));
        // the residue-free reference: same spectrum with the offending parts cleared
        s.imag[[0, 2]] = 0.0;
        s.imag[[256, 2]] = 0.0;
        assert_eq!(istft(&s, 1024).unwrap(), w);
    }

    #[test]
    fn parseval_per_frame() {
        let w = random_wave(3000, 8);
        let cfg = StftConfig::default();
        let s = stft(&w, &cfg).unwrap();
        let padded = padded_signal(&w.samples, &cfg);
        let win = cfg.window();
        let n = cfg.fft_size as f64;
        for t in 0..s.n_frames() {
            let time_energy: f64 = (0..cfg.frame_len)
                .map(|i| (padded[t * cfg.hop + i] * win[i]).powi(2))
                .sum();
            let mut spec_energy = 0.0;
            for k in 0..s.n_bins() {
                let e = s.real[[k, t]].powi(2) + s.imag[[k, t]].powi(2);
                let weight = if k == 0 || k == s.n_bins() - 1 { 1.0 } else { 2.0 };
                spec_energy += weight * e;
            }
            spec_energy /= n;
            assert!((time_energy - spec_energy).abs() <= 1e-6 * time_energy.max(1e-300));
        }
    }

    #[test]
    fn linearity() {
        let x = random_wave(2000, 1);
        let y = random_wave(2000, 2);
        let (a, b) = (0.7, -1.3);
        let mix = Waveform::new(
            x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect(),
            16000,
        )
        .unwrap();
        let cfg = StftConfig::default();
        let (sx, sy, sm) = (
            stft(&x, &cfg).unwrap(),
            stft(&y, &cfg).unwrap(),
            stft(&mix, &cfg).unwrap(),
        );
        for ((m, p), q) in sm.real.iter().zip(sx.real.iter()).zip(sy.real.iter()) {
            assert!((m - (a * p + b * q)).abs() < 1e-10);
        }
        for ((m, p), q) in sm.imag.iter().zip(sx.imag.iter()).zip(sy.imag.iter()) {
            assert!((m - (a * p + b * q)).abs() < 1e-10);
        }
    }

    #[test]
    fn short_input_is_padded() {
        let w = random_wave(100, 4);
        let s = stft(&w, &StftConfig::default()).unwrap();
        assert!(s.n_frames() >= 1);
        let r = istft(&s, w.len()).unwrap();
        assert_eq!(r.len(), 100);
    }

    #[test]
    fn rejects_bad_config_and_input() {
        let bad = StftConfig {
            hop: 128,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let w8k = Waveform::zeros(1000, 8000);
        assert!(stft(&w8k, &StftConfig::default()).is_err());
        let mut s = ComplexSpectrogram::zeros(129, 4, StftConfig::default(), 100);
        assert!(istft(&s, 100).is_err());
        s = ComplexSpectrogram::zeros(257, 4, StftConfig::default(), 100);
        assert!(istft(&s, 100).is_ok());
    }

    #[test]
    fn istft_backward_is_adjoint() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n_frames = 6;
        let target = 1200;
        let mut s = ComplexSpectrogram::zeros(257, n_frames, cfg, target);
        s.real.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        s.imag.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let g: Vec<f64> = (0..target).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = istft_samples(&s, target);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let (dr, di) = istft_backward(&g, n_frames, &cfg);
        let rhs: f64 = dr.iter().zip(s.real.iter()).map(|(a, b)| a * b).sum::<f64>()
            + di.iter().zip(s.imag.iter()).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn container_round_trip() {
        let w = random_wave(2000, 9);
        let s = stft(&w, &StftConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.cspg");
        write_spectrogram(&p, &s).unwrap();
        assert_eq!(read_spectrogram(&p).unwrap(), s);
        render_spectrogram_png(&s, dir.path().join("s.png")).unwrap();
    }
}
