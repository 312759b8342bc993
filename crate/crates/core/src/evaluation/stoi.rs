use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal_io::{resample, Waveform};

const FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Frames per intermediate intelligibility segment (384 ms).
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Short-time objective intelligibility of `estimate` against `reference`.
/// Signals are resampled to 10 kHz; the result is clamped to `[0, 1]`.
pub fn stoi(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.sample_rate != estimate.sample_rate {
        return Err(Error::ShapeMismatch("sample rates differ".into()));
    }
    let x = resample(reference, FS)?;
    let y = resample(estimate, FS)?;
    stoi_10k(&x.samples, &y.samples)
}

/// STOI on signals already sampled at 10 kHz.
pub fn stoi_10k(x: &[f64], y: &[f64]) -> Result<f64> {
    let (x, y) = remove_silent_frames(x, y);
    let xb = band_envelopes(&x);
    let yb = band_envelopes(&y);
    let frames = xb.first().map_or(0, Vec::len);
    if frames < SEGMENT {
        return Err(Error::Empty("speech frames for one intelligibility segment"));
    }
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for end in SEGMENT..=frames {
        for j in 0..BANDS {
            let xs = &xb[j][end - SEGMENT..end];
            let ys = &yb[j][end - SEGMENT..end];
            let scale = norm(xs) / (norm(ys) + EPS);
            let yp: Vec<f64> = ys.iter().zip(xs).map(|(yv, xv)| (yv * scale).min(xv * clip)).collect();
            total += normalized_correlation(xs, &yp);
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn centered_unit(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|a| a - mean).collect();
    let n = norm(&c) + EPS;
    c.into_iter().map(|a| a / n).collect()
}

fn normalized_correlation(a: &[f64], b: &[f64]) -> f64 {
    centered_unit(a).iter().zip(centered_unit(b)).map(|(p, q)| p * q).sum()
}

/// Symmetric Hann window without its zero endpoints.
fn hanning(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

/// Drops frames whose reference energy is more than the dynamic range below
/// the loudest frame, then overlap-adds the remaining windowed frames.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hanning(FRAME);
    let frame = |s: &[f64], i: usize| -> Vec<f64> { w.iter().zip(&s[i..i + FRAME]).map(|(a, b)| a * b).collect() };
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&i| 20.0 * (norm(&frame(x, i)) + EPS).log10())
        .collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, e)| max - DYN_RANGE_DB - **e < 0.0)
        .map(|(i, _)| *i)
        .collect();
    let out_len = if kept.is_empty() {
        0
    } else {
        (kept.len() - 1) * HOP + FRAME
    };
    let mut xo = vec![0.0; out_len];
    let mut yo = vec![0.0; out_len];
    for (k, &i) in kept.iter().enumerate() {
        for (n, (a, b)) in frame(x, i).into_iter().zip(frame(y, i)).enumerate() {
            xo[k * HOP + n] += a;
            yo[k * HOP + n] += b;
        }
    }
    (xo, yo)
}

/// `(first, last)` bin ranges of the third-octave bands (end exclusive).
fn third_octave_bins() -> Vec<(usize, usize)> {
    let freqs: Vec<f64> = (0..=NFFT / 2).map(|k| k as f64 * FS as f64 / NFFT as f64).collect();
    let nearest = |target: f64| {
        let mut best = 0;
        for (i, f) in freqs.iter().enumerate() {
            if (f - target).powi(2) < (freqs[best] - target).powi(2) {
                best = i;
            }
        }
        best
    };
    (0..BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Third-octave band magnitudes, `[band][frame]`.
fn band_envelopes(x: &[f64]) -> Vec<Vec<f64>> {
    let w = hanning(FRAME);
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let bands = third_octave_bins();
    let mut out = vec![Vec::new(); BANDS];
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for i in frame_starts(x.len()) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (n, (wv, xv)) in w.iter().zip(&x[i..i + FRAME]).enumerate() {
            buf[n].re = wv * xv;
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            out[b].push(buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt());
        }
    }
    out
}
