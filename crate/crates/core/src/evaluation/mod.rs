//! Objective metrics and condition-wise report tables.

mod lsd;
mod report;
mod sisdr;
mod stoi;

pub use lsd::{lsd, LSD_EPS};
pub use report::{CaseResult, MetricReport, MetricRow, Scores};
pub use sisdr::{sisdr, sisdr_samples, sisdr_with_grad, SISDR_CAP_DB};
pub use stoi::{stoi, stoi_10k};

use crate::error::{Error, Result};
use crate::network::Model;
use crate::signal_io::{render_recipe, MixRecipe, NoiseGenerator, Utterance, Waveform};
use crate::stft::{stft, StftConfig};

/// System name of the unprocessed baseline rows.
pub const NOISY_SYSTEM: &str = "noisy";

/// One test utterance: a clean reference and its noisy mixture.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub partition: String,
    pub noise_kind: String,
    pub snr_db: f64,
    pub clean: Waveform,
    pub noisy: Waveform,
}

/// SI-SDR, STOI and LSD of `estimate` against `clean`.
pub fn score(clean: &Waveform, estimate: &Waveform) -> Result<Scores> {
    let cfg = StftConfig::default();
    Ok(Scores {
        sisdr_db: sisdr(clean, estimate)?,
        stoi: stoi(clean, estimate)?,
        lsd_db: lsd(&stft(clean, &cfg)?, &stft(estimate, &cfg)?)?,
    })
}

/// Renders test recipes into evaluation cases under one partition label.
pub fn cases_from_grid(
    corpus: &[Utterance],
    noise: &NoiseGenerator,
    recipes: &[MixRecipe],
    partition: &str,
) -> Result<Vec<EvalCase>> {
    recipes
        .iter()
        .map(|r| {
            let (clean, mix) = render_recipe(corpus, noise, r)?;
            Ok(EvalCase {
                partition: partition.to_string(),
                noise_kind: r.noise_kind.to_string(),
                snr_db: r.snr_db,
                clean,
                noisy: mix.noisy,
            })
        })
        .collect()
}

/// Scores the noisy baseline and the model's enhancement of every case.
pub fn evaluate(model: &Model, cases: &[EvalCase], system: &str) -> Result<MetricReport> {
    if cases.is_empty() {
        return Err(Error::Empty("evaluation grid"));
    }
    let mut results = Vec::with_capacity(2 * cases.len());
    for c in cases {
        let enhanced = model.enhance(&c.noisy)?;
        for (name, est) in [(NOISY_SYSTEM, &c.noisy), (system, &enhanced)] {
            results.push(CaseResult {
                partition: c.partition.clone(),
                noise_kind: c.noise_kind.clone(),
                snr_db: c.snr_db,
                system: name.to_string(),
                scores: score(&c.clean, est)?,
            });
        }
    }
    MetricReport::from_cases(&results)
}
