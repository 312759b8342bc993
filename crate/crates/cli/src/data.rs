use std::fs;
use std::path::{Path, PathBuf};

use datnet::signal_io::{load_wav, read_manifest, MixRecipe, NoiseGenerator, Utterance};

use crate::exit::{CliError, CliResult};

pub const MIX_MANIFEST: &str = "manifest.jsonl";
pub const CLEAN_DIR: &str = "clean";
pub const NOISY_DIR: &str = "noisy";

/// `.wav` files directly inside `dir`, sorted by name.
pub fn list_wavs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if path.is_file() && is_wav {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::io(format!("no .wav files in {}", dir.display())));
    }
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Clean utterances keyed by path, the matching noise generator and one
/// recipe per manifest line.
pub struct MixedSet {
    pub corpus: Vec<Utterance>,
    pub noise: NoiseGenerator,
    pub recipes: Vec<MixRecipe>,
}

/// Loads a mixing manifest. Mixtures are re-rendered from their recipes, so
/// only the clean files need to be present.
pub fn load_mixed_set(manifest: &Path) -> CliResult<MixedSet> {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(CliError::config(format!("{} lists no mixtures", manifest.display())));
    }
    let mut corpus: Vec<Utterance> = Vec::new();
    for e in &entries {
        if !corpus.iter().any(|u| u.id == e.clean_path) {
            corpus.push(Utterance {
                id: e.clean_path.clone(),
                clean: load_wav(&e.clean_path)?,
            });
        }
    }
    let noise = NoiseGenerator::from_corpus(&corpus)?;
    let recipes = entries
        .iter()
        .map(|e| MixRecipe {
            utterance_id: e.clean_path.clone(),
            noise_kind: e.noise_kind.clone(),
            snr_db: e.snr_db,
            seed: e.seed,
        })
        .collect();
    Ok(MixedSet { corpus, noise, recipes })
}
