use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

/// Zero crossings of the sinc kernel on each side of the centre tap.
const HALF_ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.0;
/// Fraction of the lower Nyquist frequency kept by the anti-alias filter.
const ROLLOFF: f64 = 0.96;

/// Band-limited (Kaiser-windowed sinc) resampling to `target_rate`.
///
/// Output length is `round(len * target_rate / sample_rate)`. Equal rates
/// return an exact copy.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::config("target rate must be positive"));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let src = w.sample_rate as u64;
    let dst = target_rate as u64;
    let out_len = ((w.len() as u64 * dst + src / 2) / src).max(1) as usize;

    let ratio = dst as f64 / src as f64;
    // cutoff relative to the input Nyquist frequency
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let half_width = HALF_ZERO_CROSSINGS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);

    let x = &w.samples;
    let n_in = x.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let centre = n as f64 * src as f64 / dst as f64;
        let lo = ((centre - half_width).ceil() as i64).max(0);
        let hi = ((centre + half_width).floor() as i64).min(n_in - 1);
        let mut acc = 0.0;
        for k in lo..=hi {
            let t = centre - k as f64;
            let r = t / half_width;
            let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            acc += x[k as usize] * cutoff * sinc(cutoff * t) * window;
        }
        out.push(acc);
    }
    Waveform::new(out, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
