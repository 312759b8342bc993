//! ACE-style cochlear-implant simulation.
//!
//! A 128-point FFT filterbank at 16 kHz produces 22 band envelopes at the
//! per-channel stimulation rate. Each frame keeps the `n` largest envelopes,
//! maps them through a logarithmic loudness growth function to clinical
//! current units between threshold (T) and comfort (C) levels, and emits one
//! pulse per selected electrode, sequenced from base to apex. Electrode 1 is
//! the most apical (lowest-frequency) channel.

mod render;
mod vocoder;

pub use render::render_electrodogram;
pub use vocoder::{vocode, vocode_envelopes};

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{Waveform, SAMPLE_RATE};

pub const ACE_FFT_SIZE: usize = 128;
/// Loudness growth steepness.
pub const LGF_RHO: f64 = 416.2;

/// FFT bins per band, apical band first.
const BAND_WIDTHS: [usize; 22] = [1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 4, 4, 5, 5, 6, 7, 8];
const FIRST_BIN: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AceConfig {
    pub n_electrodes: usize,
    pub n_maxima: usize,
    /// Pulses per second per channel, which is also the analysis frame rate.
    pub channel_rate: f64,
    /// Band edges in Hz, `n_electrodes + 1` values.
    pub band_edges: Vec<f64>,
    pub t_level: f64,
    pub c_level: f64,
    /// Envelope below which a selected channel emits no pulse.
    pub base_level: f64,
    /// Envelope mapped to the comfort level.
    pub saturation_level: f64,
    pub lgf_rho: f64,
}

impl Default for AceConfig {
    fn default() -> Self {
        let bin_hz = SAMPLE_RATE as f64 / ACE_FFT_SIZE as f64;
        let mut edges = vec![(FIRST_BIN as f64 - 0.5) * bin_hz];
        let mut bin = FIRST_BIN;
        for w in BAND_WIDTHS {
            bin += w;
            edges.push((bin as f64 - 0.5) * bin_hz);
        }
        Self {
            n_electrodes: BAND_WIDTHS.len(),
            n_maxima: 8,
            channel_rate: 900.0,
            band_edges: edges,
            t_level: 100.0,
            c_level: 200.0,
            base_level: 4.0 / 256.0,
            saturation_level: 150.0 / 256.0,
            lgf_rho: LGF_RHO,
        }
    }
}

impl AceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_electrodes == 0 || !(1..=self.n_electrodes).contains(&self.n_maxima) {
            return Err(Error::config(format!(
                "need 1 <= n_maxima <= n_electrodes, got {} of {}",
                self.n_maxima, self.n_electrodes
            )));
        }
        if self.band_edges.len() != self.n_electrodes + 1 {
            return Err(Error::config(format!(
                "{} electrodes need {} band edges, got {}",
                self.n_electrodes,
                self.n_electrodes + 1,
                self.band_edges.len()
            )));
        }
        if self.band_edges.windows(2).any(|w| w[1] <= w[0]) || self.band_edges[0] < 0.0 {
            return Err(Error::config("band edges must be non-negative and strictly increasing"));
        }
        if *self.band_edges.last().unwrap() > SAMPLE_RATE as f64 / 2.0 {
            return Err(Error::config("band edges must lie below the Nyquist frequency"));
        }
        if !(self.channel_rate > 0.0) {
            return Err(Error::config("channel_rate must be positive"));
        }
        if !(self.t_level < self.c_level) {
            return Err(Error::config("T level must be below C level"));
        }
        if !(0.0 <= self.base_level && self.base_level < self.saturation_level) {
            return Err(Error::config("need 0 <= base_level < saturation_level"));
        }
        if !(self.lgf_rho > 0.0) {
            return Err(Error::config("lgf_rho must be positive"));
        }
        let bands = self.band_bins();
        if let Some(b) = bands.iter().position(|r| r.is_empty()) {
            return Err(Error::config(format!("band {} contains no FFT bin", b + 1)));
        }
        Ok(())
    }

    /// FFT bins whose centre frequency falls inside each band.
    pub fn band_bins(&self) -> Vec<std::ops::Range<usize>> {
        let bin_hz = SAMPLE_RATE as f64 / ACE_FFT_SIZE as f64;
        let first = |edge: f64| (edge / bin_hz).ceil() as usize;
        self.band_edges.windows(2).map(|w| first(w[0])..first(w[1])).collect()
    }

    pub fn band_centres(&self) -> Vec<f64> {
        self.band_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Analysis frames for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        (len as f64 * self.channel_rate / SAMPLE_RATE as f64).ceil() as usize
    }

    /// Sample index at the centre of analysis frame `k`.
    fn frame_centre(&self, k: usize) -> i64 {
        (k as f64 * SAMPLE_RATE as f64 / self.channel_rate).round() as i64
    }
}

fn check_rate(w: &Waveform) -> Result<()> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::config(format!(
            "electrodogram analysis needs {SAMPLE_RATE} Hz audio, got {}",
            w.sample_rate
        )));
    }
    Ok(())
}

/// Symmetric Hann window of the analysis length.
pub(crate) fn ace_window() -> Vec<f64> {
    let n = ACE_FFT_SIZE;
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / n as f64).cos())
        .collect()
}

/// Band envelopes `[n_electrodes × frames]`: root-sum-square of the band's
/// bin magnitudes, scaled so that a sinusoid of amplitude `A` centred on a
/// bin yields `A`.
pub fn ace_envelopes(w: &Waveform, cfg: &AceConfig) -> Result<Array2<f64>> {
    check_rate(w)?;
    cfg.validate()?;
    let n = ACE_FFT_SIZE;
    let window = ace_window();
    let gain = 2.0 / window.iter().sum::<f64>();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let bands = cfg.band_bins();
    let frames = cfg.n_frames(w.len());
    let mut env = Array2::zeros((cfg.n_electrodes, frames));
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for k in 0..frames {
        let start = cfg.frame_centre(k) - (n / 2) as i64;
        for (i, b) in buf.iter_mut().enumerate() {
            let idx = start + i as i64;
            let x = if idx >= 0 && (idx as usize) < w.len() {
                w.samples[idx as usize]
            } else {
                0.0
            };
            *b = Complex::new(x * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (e, range) in bands.iter().enumerate() {
            let power: f64 = range.clone().map(|j| buf[j].norm_sqr()).sum();
            env[[e, k]] = gain * power.sqrt();
        }
    }
    Ok(env)
}

/// Per frame, the `n` largest envelopes; ties go to the lower electrode index.
pub fn select_maxima(envelopes: &Array2<f64>, n: usize) -> Result<Array2<bool>> {
    let (m, frames) = envelopes.dim();
    if n == 0 || n > m {
        return Err(Error::config(format!("n must lie in 1..={m}, got {n}")));
    }
    let mut sel = Array2::from_elem((m, frames), false);
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for t in 0..frames {
        order.clear();
        order.extend(0..m);
        order.sort_by(|&a, &b| envelopes[[b, t]].total_cmp(&envelopes[[a, t]]).then(a.cmp(&b)));
        for &e in &order[..n] {
            sel[[e, t]] = true;
        }
    }
    Ok(sel)
}

/// Loudness growth function: `None` below the base level, otherwise
/// `T + (C − T)·ln(1 + ρ·x̂)/ln(1 + ρ)` with `x̂` the envelope normalized
/// between base and saturation levels and clipped at 1.
pub fn loudness_map(env: f64, cfg: &AceConfig) -> Option<f64> {
    if !(env >= cfg.base_level) || env <= 0.0 {
        return None;
    }
    let x = ((env - cfg.base_level) / (cfg.saturation_level - cfg.base_level)).min(1.0);
    let p = (1.0 + cfg.lgf_rho * x).ln() / (1.0 + cfg.lgf_rho).ln();
    Some(cfg.t_level + (cfg.c_level - cfg.t_level) * p)
}

/// Inverse of [`loudness_map`] on `[T, C]`.
pub fn loudness_inverse(amplitude: f64, cfg: &AceConfig) -> f64 {
    let p = ((amplitude - cfg.t_level) / (cfg.c_level - cfg.t_level)).clamp(0.0, 1.0);
    let x = ((1.0 + cfg.lgf_rho).powf(p) - 1.0) / cfg.lgf_rho;
    cfg.base_level + x * (cfg.saturation_level - cfg.base_level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    /// Onset in seconds.
    pub time: f64,
    /// 1-based, 1 = most apical.
    pub electrode: usize,
    /// Clinical current units.
    pub amplitude: f64,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Electrodogram {
    pub pulses: Vec<Pulse>,
    pub duration: f64,
    pub n_frames: usize,
    pub config: AceConfig,
}

impl Electrodogram {
    /// Electrodes stimulated in each frame.
    pub fn frame_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.n_frames];
        for p in &self.pulses {
            sets[p.frame].push(p.electrode);
        }
        sets
    }

    /// Mapped amplitudes `[n_electrodes × frames]`, zero where no pulse.
    pub fn amplitude_matrix(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.config.n_electrodes, self.n_frames));
        for p in &self.pulses {
            a[[p.electrode - 1, p.frame]] = p.amplitude;
        }
        a
    }

    /// Per frame, the electrode of the strongest pulse.
    pub fn dominant_electrodes(&self) -> Vec<Option<usize>> {
        let mut best: Vec<Option<(f64, usize)>> = vec![None; self.n_frames];
        for p in &self.pulses {
            let slot = &mut best[p.frame];
            if slot.map_or(true, |(a, _)| p.amplitude > a) {
                *slot = Some((p.amplitude, p.electrode));
            }
        }
        best.into_iter().map(|b| b.map(|(_, e)| e)).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            time_s: f64,
            electrode: usize,
            amplitude: f64,
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        if self.pulses.is_empty() {
            w.write_record(["time_s", "electrode", "amplitude"])
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        for p in &self.pulses {
            w.serialize(Row {
                time_s: p.time,
                electrode: p.electrode,
                amplitude: p.amplitude,
            })
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds pulses from envelopes: selection, loudness mapping, and base-to-apex
/// sequencing within each frame at `n_maxima` slots per frame period.
pub fn pulses_from_envelopes(env: &Array2<f64>, cfg: &AceConfig, duration: f64) -> Result<Electrodogram> {
    cfg.validate()?;
    let (m, frames) = env.dim();
    if m != cfg.n_electrodes {
        return Err(Error::shape(format!(
            "{m} envelope rows for {} electrodes",
            cfg.n_electrodes
        )));
    }
    let sel = select_maxima(env, cfg.n_maxima)?;
    let period = 1.0 / cfg.channel_rate;
    let slot = period / cfg.n_maxima as f64;
    let mut pulses = Vec::new();
    for t in 0..frames {
        let mut k = 0;
        for e in (0..m).rev() {
            if !sel[[e, t]] {
                continue;
            }
            if let Some(amplitude) = loudness_map(env[[e, t]], cfg) {
                pulses.push(Pulse {
                    time: t as f64 * period + k as f64 * slot,
                    electrode: e + 1,
                    amplitude,
                    frame: t,
                });
                k += 1;
            }
        }
    }
    Ok(Electrodogram {
        pulses,
        duration,
        n_frames: frames,
        config: cfg.clone(),
    })
}

pub fn ace_process(w: &Waveform, cfg: &AceConfig) -> Result<Electrodogram> {
    let env = ace_envelopes(w, cfg)?;
    pulses_from_envelopes(&env, cfg, w.duration_secs())
}

/// Mean over frames of the Jaccard index between the stimulated electrode
/// sets of two electrodograms; frames where both are silent count as 1.
pub fn selection_overlap(a: &Electrodogram, b: &Electrodogram) -> Result<f64> {
    if a.n_frames != b.n_frames {
        return Err(Error::shape(format!("{} vs {} frames", a.n_frames, b.n_frames)));
    }
    if a.n_frames == 0 {
        return Err(Error::Empty("electrodogram has no frames"));
    }
    let (sa, sb) = (a.frame_sets(), b.frame_sets());
    let total: f64 = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| {
            let inter = x.iter().filter(|e| y.contains(e)).count();
            let union = x.len() + y.len() - inter;
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        })
        .sum();
    Ok(total / a.n_frames as f64)
}
