use std::path::Path;

use serde::{Deserialize, Serialize};

use datnet::network::{Model, ModelConfig};
use datnet::training::{train_from, Checkpoint, Dataset, TrainConfig, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT};

use crate::args::{ModelOverrides, TrainArgs};
use crate::data::{load_mixed_set, MIX_MANIFEST};
use crate::exit::{CliError, CliResult};
use crate::manifest::RunContext;

/// Contents of a training configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Share of distinct utterances held out for validation.
    pub valid_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            valid_fraction: 0.1,
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn apply_model_overrides(cfg: &mut ModelConfig, o: &ModelOverrides) {
    if let Some(v) = o.variant {
        cfg.variant = v;
    }
    if let Some(p) = o.chunk_len {
        cfg.chunk_len = p;
    }
    if let Some(f) = o.ftb_order {
        cfg.ftb_order = f;
    }
    if let Some(m) = o.mask_target {
        cfg.mask_target = m;
    }
    if let Some(m) = o.output_mode {
        cfg.output_mode = m;
    }
}

pub fn resolve(a: &TrainArgs) -> CliResult<RunConfig> {
    let mut cfg: RunConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    apply_model_overrides(&mut cfg.model, &a.model);
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch {
        t.batch = v;
    }
    if let Some(v) = a.loss_alpha {
        t.loss_alpha = v;
    }
    if let Some(v) = a.loss {
        t.loss = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
        cfg.model.seed = v;
    }
    if let Some(v) = a.valid_fraction {
        cfg.valid_fraction = v;
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    if !(0.0..1.0).contains(&cfg.valid_fraction) {
        return Err(CliError::config(format!(
            "valid_fraction must lie in [0, 1), got {}",
            cfg.valid_fraction
        )));
    }
    Ok(cfg)
}

pub fn run(ctx: &RunContext, a: &TrainArgs) -> CliResult<()> {
    let cfg = resolve(a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let (data_dir, out) = match (&a.data, &a.out) {
        (Some(d), Some(o)) => (d, o),
        _ => return Err(CliError::config("--data and --out are required")),
    };
    let set = load_mixed_set(&data_dir.join(MIX_MANIFEST))?;
    ctx.begin("train", out, serde_json::to_value(&cfg)?, Some(cfg.train.seed))?;

    let data = Dataset::from_grid(
        &set.corpus,
        &set.noise,
        &set.recipes,
        cfg.valid_fraction,
        &cfg.model.stft,
    )?;
    println!(
        "training {} on {} pairs ({} held out)",
        cfg.model.variant,
        data.train.len(),
        data.valid.len()
    );
    let last = out.join(LAST_CHECKPOINT);
    let trainer = if a.resume && last.exists() {
        let ck = Checkpoint::load(&last)?;
        if ck.model.config != cfg.model {
            return Err(CliError::config(
                "checkpoint model configuration differs from the requested one",
            ));
        }
        let mut t = Trainer::from_checkpoint(ck)?;
        t.config.epochs = cfg.train.epochs;
        println!("resuming after epoch {}", t.state.epoch);
        t
    } else {
        Trainer::new(Model::build(&cfg.model)?, cfg.train.clone())?
    };
    let outcome = train_from(trainer, &data, Some(out))?;
    for r in &outcome.last.state.history {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "epoch {:>3} {:<5} loss {:>9.4} sisdr {:>8.3} dB stoi {} lsd {}",
            r.epoch,
            r.split,
            r.loss,
            r.sisdr,
            opt(r.stoi),
            opt(r.lsd)
        );
        if !r.loss.is_finite() || !r.sisdr.is_finite() {
            return Err(CliError::numeric(format!("non-finite metrics in epoch {}", r.epoch)));
        }
    }
    println!(
        "checkpoints: {} and {}",
        out.join(BEST_CHECKPOINT).display(),
        last.display()
    );
    Ok(())
}
