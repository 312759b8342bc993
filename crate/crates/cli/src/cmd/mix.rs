use rayon::prelude::*;
use serde_json::json;

use datnet::signal_io::{
    derive_seed, load_wav, render_recipe, write_manifest, write_wav, ManifestEntry, MixRecipe, NoiseGenerator,
    NoiseKind, Utterance, TEST_SNRS_DB, TRAIN_SNRS_DB,
};

use crate::args::MixArgs;
use crate::data::{file_stem, list_wavs, MIX_MANIFEST, NOISY_DIR};
use crate::exit::{CliError, CliResult};
use crate::manifest::RunContext;

pub fn parse_snr_grid(s: &str) -> CliResult<Vec<f64>> {
    match s {
        "train" => Ok(TRAIN_SNRS_DB.to_vec()),
        "test" => Ok(TEST_SNRS_DB.to_vec()),
        list => {
            let snrs: Vec<f64> = list
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::config(format!("bad SNR grid {list:?}")))?;
            if snrs.iter().any(|v| !v.is_finite()) {
                return Err(CliError::config(format!("bad SNR grid {list:?}")));
            }
            Ok(snrs)
        }
    }
}

fn kind_label(kind: &NoiseKind) -> String {
    match kind {
        NoiseKind::File(p) => format!("file-{}", file_stem(p)),
        other => other.to_string(),
    }
}

pub fn run(ctx: &RunContext, a: &MixArgs) -> CliResult<()> {
    let snrs = parse_snr_grid(&a.snr_grid)?;
    let kinds: Vec<NoiseKind> = a.noise.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    if kinds.is_empty() {
        return Err(CliError::config("at least one noise kind is required"));
    }
    let files = list_wavs(&a.clean_dir)?;
    let config = json!({
        "clean_dir": a.clean_dir,
        "noise": kinds,
        "snr_db": snrs,
        "encoding": format!("{:?}", a.encoding).to_lowercase(),
    });
    ctx.begin("mix", &a.out, config, Some(a.seed))?;

    let corpus: Vec<Utterance> = files
        .iter()
        .map(|p| {
            let path = std::fs::canonicalize(p)?;
            Ok(Utterance {
                id: path.to_string_lossy().into_owned(),
                clean: load_wav(&path)?,
            })
        })
        .collect::<CliResult<_>>()?;
    let noise = NoiseGenerator::from_corpus(&corpus)?;

    let mut recipes = Vec::new();
    let mut entries = Vec::new();
    for (u, file) in corpus.iter().zip(&files) {
        for kind in &kinds {
            for &snr_db in &snrs {
                let seed = derive_seed(a.seed, recipes.len() as u64);
                entries.push(ManifestEntry {
                    id: format!("{}_{}_{snr_db:+}dB", file_stem(file), kind_label(kind)),
                    clean_path: u.id.clone(),
                    noise_kind: kind.clone(),
                    snr_db,
                    seed,
                });
                recipes.push(MixRecipe {
                    utterance_id: u.id.clone(),
                    noise_kind: kind.clone(),
                    snr_db,
                    seed,
                });
            }
        }
    }

    let dir = a.out.join(NOISY_DIR);
    std::fs::create_dir_all(&dir)?;
    recipes
        .par_iter()
        .zip(&entries)
        .try_for_each(|(r, e)| -> CliResult<()> {
            let (_, mix) = render_recipe(&corpus, &noise, r)?;
            write_wav(dir.join(format!("{}.wav", e.id)), &mix.noisy, a.encoding.into())?;
            Ok(())
        })?;
    write_manifest(a.out.join(MIX_MANIFEST), &entries)?;
    println!(
        "wrote {} mixtures ({} utterances x {} noise kinds x {} SNRs) to {}",
        entries.len(),
        corpus.len(),
        kinds.len(),
        snrs.len(),
        dir.display()
    );
    Ok(())
}
