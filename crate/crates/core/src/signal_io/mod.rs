//! Audio containers, WAV I/O, resampling, SNR-controlled mixing and the
//! synthetic corpus used in place of licensed speech and noise databases.

mod grid;
mod mix;
mod resample;
mod synth;
mod wav;

pub use grid::{
    build_test_grid, build_training_grid, read_manifest, render_recipe, write_manifest, ManifestEntry, MixRecipe,
    NOISE_MARGIN, TEST_SNRS_DB, TRAIN_SNRS_DB,
};
pub use mix::{mix_at_snr, power, Mixture};
pub use resample::resample;
pub use synth::{make_synthetic_corpus, mean_spectral_envelope, pseudo_speech, NoiseGenerator, NoiseKind, Utterance};
pub use wav::{load_wav, write_wav, WavEncoding};

use crate::error::{Error, Result};

/// Nominal sample rate of every signal the network sees.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono real-valued audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::Empty("waveform has no samples"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("waveform contains non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        power(&self.samples).sqrt()
    }
}

/// SplitMix64 step, used to derive independent child seeds from one base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
