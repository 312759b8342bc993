use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{derive_seed, mix_at_snr, Mixture, NoiseGenerator, NoiseKind, Utterance, Waveform};
use crate::error::{Error, Result};

/// Training SNR grid: -2 to 14 dB in 2 dB steps.
pub const TRAIN_SNRS_DB: [f64; 9] = [-2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0];
/// Test SNR grid.
pub const TEST_SNRS_DB: [f64; 3] = [-5.0, 0.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixRecipe {
    pub utterance_id: String,
    pub noise_kind: NoiseKind,
    pub snr_db: f64,
    pub seed: u64,
}

/// Cross product utterances x noise kinds x training SNRs.
pub fn build_training_grid<S: AsRef<str>>(
    utterance_ids: &[S],
    noise_kinds: &[NoiseKind],
    seed: u64,
) -> Result<Vec<MixRecipe>> {
    build_grid(utterance_ids, noise_kinds, &TRAIN_SNRS_DB, seed)
}

/// Cross product utterances x noise kinds x {-5, 0, 5} dB.
pub fn build_test_grid<S: AsRef<str>>(
    utterance_ids: &[S],
    noise_kinds: &[NoiseKind],
    seed: u64,
) -> Result<Vec<MixRecipe>> {
    build_grid(utterance_ids, noise_kinds, &TEST_SNRS_DB, seed)
}

fn build_grid<S: AsRef<str>>(
    utterance_ids: &[S],
    noise_kinds: &[NoiseKind],
    snrs: &[f64],
    seed: u64,
) -> Result<Vec<MixRecipe>> {
    if utterance_ids.is_empty() {
        return Err(Error::Empty("corpus is empty"));
    }
    let mut grid = Vec::with_capacity(utterance_ids.len() * noise_kinds.len() * snrs.len());
    for id in utterance_ids {
        for kind in noise_kinds {
            for &snr_db in snrs {
                grid.push(MixRecipe {
                    utterance_id: id.as_ref().to_string(),
                    noise_kind: kind.clone(),
                    snr_db,
                    seed: derive_seed(seed, grid.len() as u64),
                });
            }
        }
    }
    Ok(grid)
}

/// Noise generated for a recipe is this many samples longer than the clean
/// utterance, so that the crop offset varies between recipes.
pub const NOISE_MARGIN: usize = 16_000;

/// Realizes a recipe: generates its noise and mixes it with the utterance.
pub fn render_recipe(corpus: &[Utterance], noise: &NoiseGenerator, recipe: &MixRecipe) -> Result<(Waveform, Mixture)> {
    let utt = corpus
        .iter()
        .find(|u| u.id == recipe.utterance_id)
        .ok_or_else(|| Error::config(format!("utterance '{}' not in corpus", recipe.utterance_id)))?;
    let n = noise.generate(
        &recipe.noise_kind,
        utt.clean.len() + NOISE_MARGIN,
        derive_seed(recipe.seed, 0),
    )?;
    let mix = mix_at_snr(&utt.clean, &n, recipe.snr_db, derive_seed(recipe.seed, 1))?;
    Ok((utt.clean.clone(), mix))
}

/// One line of a JSON-lines mixing manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub clean_path: String,
    pub noise_kind: NoiseKind,
    pub snr_db: f64,
    pub seed: u64,
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_recipe_hits_target_snr() {
        let corpus = crate::signal_io::make_synthetic_corpus(2, 3).unwrap();
        let gen = NoiseGenerator::from_corpus(&corpus).unwrap();
        let ids: Vec<&str> = corpus.iter().map(|u| u.id.as_str()).collect();
        let grid = build_test_grid(&ids, &[NoiseKind::BabbleSynth], 9).unwrap();
        for r in &grid {
            let (clean, mix) = render_recipe(&corpus, &gen, r).unwrap();
            assert_eq!(clean.len(), mix.noisy.len());
            let snr =
                10.0 * (super::super::power(&clean.samples) / super::super::power(&mix.scaled_noise.samples)).log10();
            assert!((snr - r.snr_db).abs() < 1e-9);
            let (_, again) = render_recipe(&corpus, &gen, r).unwrap();
            assert_eq!(again.noisy, mix.noisy);
        }
        let missing = MixRecipe {
            utterance_id: "nope".into(),
            ..grid[0].clone()
        };
        assert!(render_recipe(&corpus, &gen, &missing).is_err());
    }

    #[test]
    fn one_utterance_one_noise_gives_nine() {
        let g = build_training_grid(&["u0"], &[NoiseKind::White], 1).unwrap();
        assert_eq!(g.len(), 9);
        let snrs: Vec<f64> = g.iter().map(|r| r.snr_db).collect();
        assert_eq!(snrs, TRAIN_SNRS_DB.to_vec());
    }

    #[test]
    fn test_grid_snrs() {
        let g = build_test_grid(&["a", "b"], &[NoiseKind::White, NoiseKind::CarSynth], 1).unwrap();
        assert_eq!(g.len(), 12);
        let mut snrs: Vec<f64> = g.iter().map(|r| r.snr_db).collect();
        snrs.sort_by(f64::total_cmp);
        snrs.dedup();
        assert_eq!(snrs, vec![-5.0, 0.0, 5.0]);
    }

    #[test]
    fn empty_noise_list_gives_empty_grid() {
        assert!(build_training_grid(&["u0"], &[], 1).unwrap().is_empty());
        let none: [&str; 0] = [];
        assert!(build_training_grid(&none, &[NoiseKind::White], 1).is_err());
    }

    #[test]
    fn recipe_seeds_distinct_and_deterministic() {
        let a = build_training_grid(&["u0", "u1"], &[NoiseKind::White], 3).unwrap();
        let b = build_training_grid(&["u0", "u1"], &[NoiseKind::White], 3).unwrap();
        assert_eq!(a, b);
        let mut seeds: Vec<u64> = a.iter().map(|r| r.seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), a.len());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let entries = vec![
            ManifestEntry {
                id: "x".into(),
                clean_path: "clean/x.wav".into(),
                noise_kind: NoiseKind::SpeechShaped,
                snr_db: -2.0,
                seed: 17,
            },
            ManifestEntry {
                id: "y".into(),
                clean_path: "clean/y.wav".into(),
                noise_kind: NoiseKind::File("n.wav".into()),
                snr_db: 4.0,
                seed: 18,
            },
        ];
        write_manifest(&p, &entries).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().next().unwrap().contains("\"clean_path\":\"clean/x.wav\""));
        assert_eq!(read_manifest(&p).unwrap(), entries);
    }
}
