use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Waveform;
use crate::error::{Error, Result};

/// Mean-square power.
pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub noisy: Waveform,
    pub scaled_noise: Waveform,
    pub gain: f64,
    /// Start of the noise crop.
    pub offset: usize,
}

/// Adds noise to `clean` at `snr_db`.
///
/// A clean-length segment is cropped from `noise` at an offset drawn
/// uniformly from `seed`, then scaled by
/// `g = sqrt(P_clean / (P_noise * 10^(snr_db / 10)))`.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<Mixture> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::config(format!(
            "sample rates differ: clean {} Hz, noise {} Hz",
            clean.sample_rate, noise.sample_rate
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::config("SNR must be finite"));
    }
    if noise.len() < clean.len() {
        return Err(Error::shape(format!(
            "noise ({} samples) shorter than clean ({} samples)",
            noise.len(),
            clean.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen_range(0..=noise.len() - clean.len());
    let segment = &noise.samples[offset..offset + clean.len()];

    let p_clean = power(&clean.samples);
    let p_noise = power(segment);
    if p_clean == 0.0 {
        return Err(Error::ZeroPower("clean"));
    }
    if p_noise == 0.0 {
        return Err(Error::ZeroPower("noise segment"));
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = segment.iter().map(|n| gain * n).collect();
    let noisy: Vec<f64> = clean.samples.iter().zip(&scaled).map(|(c, n)| c + n).collect();
    Ok(Mixture {
        noisy: Waveform::new(noisy, clean.sample_rate)?,
        scaled_noise: Waveform::new(scaled, clean.sample_rate)?,
        gain,
        offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn snr_db(clean: &[f64], noise: &[f64]) -> f64 {
        10.0 * (power(clean) / power(noise)).log10()
    }

    fn gaussian(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        Waveform::new(s, 16000).unwrap()
    }

    #[test]
    fn equal_powers_give_unit_gain() {
        let clean = Waveform::new(vec![1.0, -1.0, 1.0, -1.0], 16000).unwrap();
        let noise = Waveform::new(vec![-1.0, 1.0, 1.0, -1.0], 16000).unwrap();
        let m = mix_at_snr(&clean, &noise, 0.0, 1).unwrap();
        assert!((m.gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_power_ratio_gives_half_gain() {
        let clean = Waveform::new(vec![1.0; 8], 16000).unwrap();
        let noise = Waveform::new(vec![2.0; 8], 16000).unwrap();
        let m = mix_at_snr(&clean, &noise, 0.0, 3).unwrap();
        assert!((m.gain - 0.5).abs() < 1e-12);
        for (n, c) in m.noisy.samples.iter().zip(&clean.samples) {
            assert!((n - c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_at_5db() {
        let clean = gaussian(16000, 1);
        let noise = gaussian(20000, 2);
        let m = mix_at_snr(&clean, &noise, 5.0, 9).unwrap();
        let measured = snr_db(&clean.samples, &m.scaled_noise.samples);
        assert!((measured - 5.0).abs() <= 0.01, "{measured}");
        // noisy = clean + scaled noise
        for i in 0..clean.len() {
            let d = m.noisy.samples[i] - clean.samples[i] - m.scaled_noise.samples[i];
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_power_errors() {
        let z = Waveform::zeros(16, 16000);
        let n = gaussian(16, 4);
        assert!(matches!(mix_at_snr(&z, &n, 0.0, 0), Err(Error::ZeroPower("clean"))));
        assert!(matches!(
            mix_at_snr(&n, &z, 0.0, 0),
            Err(Error::ZeroPower("noise segment"))
        ));
    }

    #[test]
    fn crop_offset_is_seeded() {
        let clean = gaussian(100, 1);
        let noise = gaussian(1000, 2);
        let a = mix_at_snr(&clean, &noise, 0.0, 5).unwrap();
        let b = mix_at_snr(&clean, &noise, 0.0, 5).unwrap();
        assert_eq!(a.offset, b.offset);
        assert_eq!(a.noisy, b.noisy);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn achieved_snr_matches_request(snr in -10.0f64..20.0, s1 in 0u64..1000, s2 in 0u64..1000) {
            let clean = gaussian(400, s1);
            let noise = gaussian(900, s2 + 5000);
            let m = mix_at_snr(&clean, &noise, snr, s1 ^ s2).unwrap();
            let measured = snr_db(&clean.samples, &m.scaled_noise.samples);
            prop_assert!((measured - snr).abs() <= 0.01);
        }
    }
}
