//! Pseudo-speech and synthetic noise generators.
//!
//! Pseudo-speech is a pitch-modulated harmonic stack shaped by three drifting
//! formant resonances and a syllable-rate amplitude envelope. It is not
//! intelligible, but it has the harmonic/formant structure that the
//! enhancement network and the metrics care about.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{derive_seed, load_wav, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::stft::{stft, StftConfig};

/// Noise categories available for mixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    SpeechShaped,
    BabbleSynth,
    CarSynth,
    File(PathBuf),
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::White => write!(f, "white"),
            NoiseKind::SpeechShaped => write!(f, "speech_shaped"),
            NoiseKind::BabbleSynth => write!(f, "babble_synth"),
            NoiseKind::CarSynth => write!(f, "car_synth"),
            NoiseKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "speech_shaped" | "ssn" => Ok(NoiseKind::SpeechShaped),
            "babble_synth" | "babble" => Ok(NoiseKind::BabbleSynth),
            "car_synth" | "car" => Ok(NoiseKind::CarSynth),
            other => match other.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(NoiseKind::File(PathBuf::from(p))),
                _ => Err(Error::config(format!("unknown noise kind '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub clean: Waveform,
}

/// Deterministic pseudo-speech corpus: `n_utterances` clips of 2-3 s at 16 kHz.
pub fn make_synthetic_corpus(n_utterances: usize, seed: u64) -> Result<Vec<Utterance>> {
    if n_utterances == 0 {
        return Err(Error::Empty("corpus size must be at least 1"));
    }
    (0..n_utterances)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let len = rng.gen_range(32_000..=48_000);
            Ok(Utterance {
                id: format!("synth_{seed}_{i:04}"),
                clean: pseudo_speech(len, &mut rng)?,
            })
        })
        .collect()
}

struct Formant {
    centre: f64,
    drift: f64,
    drift_rate: f64,
    phase: f64,
    bandwidth: f64,
    gain: f64,
}

/// One pseudo-speech stream of exactly `len` samples at 16 kHz, peak 0.5.
pub fn pseudo_speech(len: usize, rng: &mut impl Rng) -> Result<Waveform> {
    let fs = SAMPLE_RATE as f64;
    let f0_base = rng.gen_range(90.0..220.0);
    let contour_rate = rng.gen_range(0.3..1.0);
    let contour_phase = rng.gen_range(0.0..2.0 * PI);
    let vibrato_rate = rng.gen_range(4.0..6.0);
    let syllable_rate = rng.gen_range(3.0..5.0);
    let syllable_phase = rng.gen_range(0.0..2.0 * PI);
    let formants = [
        (rng.gen_range(350.0..800.0), 80.0, 1.0),
        (rng.gen_range(1000.0..2200.0), 120.0, 0.6),
        (rng.gen_range(2500.0..3300.0), 200.0, 0.3),
    ]
    .map(|(centre, bandwidth, gain)| Formant {
        centre,
        drift: centre * rng.gen_range(0.1..0.25),
        drift_rate: rng.gen_range(1.5..4.0),
        phase: rng.gen_range(0.0..2.0 * PI),
        bandwidth,
        gain,
    });
    let n_harm = 40;
    let harm_phase: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();

    let mut out = vec![0.0; len];
    let mut phase = 0.0;
    let mut centres = [0.0; 3];
    for (n, sample) in out.iter_mut().enumerate() {
        let t = n as f64 / fs;
        let f0 = f0_base
            * (1.0
                + 0.12 * (2.0 * PI * contour_rate * t + contour_phase).sin()
                + 0.02 * (2.0 * PI * vibrato_rate * t).sin());
        phase += 2.0 * PI * f0 / fs;
        for (c, f) in centres.iter_mut().zip(&formants) {
            *c = f.centre + f.drift * (2.0 * PI * f.drift_rate * t + f.phase).sin();
        }
        let mut acc = 0.0;
        for k in 1..=n_harm {
            let fk = k as f64 * f0;
            if fk > 4500.0 {
                break;
            }
            let mut amp = 0.02 / k as f64;
            for (c, f) in centres.iter().zip(&formants) {
                let d = (fk - c) / f.bandwidth;
                amp += f.gain * (-0.5 * d * d).exp();
            }
            acc += amp * (k as f64 * phase + harm_phase[k - 1]).sin();
        }
        let syllable = 0.5 - 0.5 * (2.0 * PI * syllable_rate * t + syllable_phase).cos();
        *sample = acc * (0.1 + 0.9 * syllable * syllable);
    }
    // 20 ms onset/offset tapers
    let taper = (0.02 * fs) as usize;
    for i in 0..taper.min(len / 2) {
        let g = i as f64 / taper as f64;
        out[i] *= g;
        out[len - 1 - i] *= g;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::new(out, SAMPLE_RATE)
}

/// Long-term average magnitude spectrum (one-sided, 512-point frames).
pub fn mean_spectral_envelope(corpus: &[Utterance]) -> Result<Vec<f64>> {
    let cfg = StftConfig::default();
    let n_bins = cfg.n_bins();
    let mut acc = vec![0.0; n_bins];
    let mut frames = 0usize;
    for u in corpus {
        let s = stft(&u.clean, &cfg)?;
        for t in 0..s.n_frames() {
            for (k, a) in acc.iter_mut().enumerate() {
                *a += s.real[[k, t]].hypot(s.imag[[k, t]]);
            }
        }
        frames += s.n_frames();
    }
    if frames == 0 {
        return Err(Error::Empty("corpus has no frames"));
    }
    acc.iter_mut().for_each(|a| *a /= frames as f64);
    Ok(acc)
}

/// Produces noise signals of the requested kind.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    /// Magnitude envelope for speech-shaped noise, indexed by 512-point FFT bin.
    pub speech_envelope: Vec<f64>,
}

impl NoiseGenerator {
    pub fn new(speech_envelope: Vec<f64>) -> Self {
        Self { speech_envelope }
    }

    pub fn from_corpus(corpus: &[Utterance]) -> Result<Self> {
        Ok(Self::new(mean_spectral_envelope(corpus)?))
    }

    /// Unit-RMS noise of `len` samples at 16 kHz. File noise is tiled to length.
    pub fn generate(&self, kind: &NoiseKind, len: usize, seed: u64) -> Result<Waveform> {
        if len == 0 {
            return Err(Error::Empty("noise length must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = match kind {
            NoiseKind::White => gaussian(len, &mut rng),
            NoiseKind::SpeechShaped => self.speech_shaped(len, &mut rng),
            NoiseKind::CarSynth => car(len, &mut rng),
            NoiseKind::BabbleSynth => {
                let mut acc = vec![0.0; len];
                for talker in 0..8u64 {
                    let mut trng = ChaCha8Rng::seed_from_u64(derive_seed(seed, talker));
                    let stream = pseudo_speech(len, &mut trng)?;
                    acc.iter_mut().zip(&stream.samples).for_each(|(a, s)| *a += s);
                }
                acc
            }
            NoiseKind::File(path) => {
                let w = load_wav(path)?;
                if w.sample_rate != SAMPLE_RATE {
                    return Err(Error::config(format!(
                        "noise file {} is {} Hz; resample to {SAMPLE_RATE} Hz first",
                        path.display(),
                        w.sample_rate
                    )));
                }
                w.samples.iter().cycle().take(len).copied().collect()
            }
        };
        let rms = (samples.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        if rms == 0.0 {
            return Err(Error::ZeroPower("generated noise"));
        }
        Waveform::new(samples.into_iter().map(|v| v / rms).collect(), SAMPLE_RATE)
    }

    fn speech_shaped(&self, len: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = gaussian(len, rng).into_iter().map(|v| Complex::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(len).process(&mut buf);
        let env = &self.speech_envelope;
        let fs = SAMPLE_RATE as f64;
        let bin_hz = fs / 512.0;
        for (k, c) in buf.iter_mut().enumerate() {
            let freq = if k <= len / 2 { k } else { len - k } as f64 * fs / len as f64;
            // linear interpolation of the 512-point envelope
            let pos = (freq / bin_hz).min((env.len() - 1) as f64);
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let g = if i + 1 < env.len() {
                env[i] * (1.0 - frac) + env[i + 1] * frac
            } else {
                env[i]
            };
            *c *= g;
        }
        planner.plan_fft_inverse(len).process(&mut buf);
        buf.into_iter().map(|c| c.re / len as f64).collect()
    }
}

fn gaussian(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Leaky-integrated (brown) noise through a one-pole ~200 Hz low-pass.
fn car(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let alpha = (-2.0 * PI * 200.0 / SAMPLE_RATE as f64).exp();
    let mut brown = 0.0;
    let mut lp = 0.0;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let w: f64 = StandardNormal.sample(rng);
        brown = 0.995 * brown + w;
        lp = alpha * lp + (1.0 - alpha) * brown;
        out.push(lp);
    }
    let mean = out.iter().sum::<f64>() / len as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band_energy_fraction(w: &Waveform, lo: f64, hi: f64) -> f64 {
        let n = w.len();
        let mut buf: Vec<Complex<f64>> = w.samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let mut band = 0.0;
        let mut total = 0.0;
        for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
            let f = k as f64 * w.sample_rate as f64 / n as f64;
            let e = c.norm_sqr();
            total += e;
            if (lo..=hi).contains(&f) {
                band += e;
            }
        }
        band / total
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = make_synthetic_corpus(3, 11).unwrap();
        let b = make_synthetic_corpus(3, 11).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.clean, y.clean);
        }
        let c = make_synthetic_corpus(3, 12).unwrap();
        assert_ne!(a[0].clean, c[0].clean);
    }

    #[test]
    fn corpus_length_contract() {
        let corpus = make_synthetic_corpus(10, 1).unwrap();
        assert_eq!(corpus.len(), 10);
        for u in &corpus {
            assert!((32_000..=48_000).contains(&u.clean.len()));
            assert_eq!(u.clean.sample_rate, 16_000);
        }
        assert!(make_synthetic_corpus(0, 1).is_err());
    }

    #[test]
    fn speech_band_carries_energy() {
        for u in make_synthetic_corpus(4, 5).unwrap() {
            let frac = band_energy_fraction(&u.clean, 100.0, 4000.0);
            assert!(frac > 0.9, "{} band fraction {frac}", u.id);
        }
    }

    #[test]
    fn noise_kinds_parse_and_display() {
        for s in ["white", "speech_shaped", "babble_synth", "car_synth", "file:/tmp/x.wav"] {
            let k: NoiseKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("pink".parse::<NoiseKind>().is_err());
        let json = serde_json::to_string(&NoiseKind::CarSynth).unwrap();
        assert_eq!(json, "\"car_synth\"");
    }

    #[test]
    fn noise_is_unit_rms_and_seeded() {
        let corpus = make_synthetic_corpus(2, 3).unwrap();
        let gen = NoiseGenerator::from_corpus(&corpus).unwrap();
        for kind in [
            NoiseKind::White,
            NoiseKind::SpeechShaped,
            NoiseKind::BabbleSynth,
            NoiseKind::CarSynth,
        ] {
            let a = gen.generate(&kind, 8000, 42).unwrap();
            let b = gen.generate(&kind, 8000, 42).unwrap();
            assert_eq!(a, b, "{kind}");
            assert!((a.rms() - 1.0).abs() < 1e-9, "{kind}");
        }
    }

    #[test]
    fn car_noise_is_low_frequency() {
        let gen = NoiseGenerator::new(vec![1.0; 257]);
        let w = gen.generate(&NoiseKind::CarSynth, 16000, 1).unwrap();
        assert!(band_energy_fraction(&w, 0.0, 500.0) > 0.9);
    }
}
