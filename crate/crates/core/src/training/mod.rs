//! Training objective, Adam optimizer loop, checkpointing, the
//! single-utterance overfit harness and finite-difference gradient audits.
//!
//! Utterances in a batch are processed one at a time and their gradients
//! averaged, which is the same as zero-padding to the longest utterance with
//! the loss masked over the padding.

mod audit;
mod checkpoint;
mod loss;
mod optim;

pub use audit::{grad_audit, AuditDims, AuditModule};
pub use checkpoint::{Checkpoint, TrainState};
pub use loss::{loss, loss_and_grad, spectral_l1, LossKind, LossTerms};
pub use optim::{clip_global_norm, global_norm, Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{lsd, sisdr, stoi};
use crate::network::{spectrogram_tensor, tensor_spectrogram, Model, ModelConfig};
use crate::params::Parameters;
use crate::signal_io::{derive_seed, mix_at_snr, render_recipe, MixRecipe, NoiseGenerator, Utterance, Waveform};
use crate::stft::{istft, stft, ComplexSpectrogram, StftConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Epochs without validation improvement before the learning rate decays.
    pub lr_patience: usize,
    /// Multiplier applied on decay.
    pub lr_decay: f64,
    pub grad_clip_norm: f64,
    /// Utterances per optimizer step.
    pub batch: usize,
    pub epochs: usize,
    /// Weight of the spectral magnitude term.
    pub loss_alpha: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            lr_patience: 3,
            lr_decay: 0.5,
            grad_clip_norm: 5.0,
            batch: 4,
            epochs: 20,
            loss_alpha: 0.3,
            loss: LossKind::Combined,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..=1.0).contains(&self.loss_alpha) {
            return Err(Error::config(format!(
                "loss_alpha must lie in [0, 1], got {}",
                self.loss_alpha
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::config("grad_clip_norm must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be at least 1"));
        }
        Ok(())
    }
}

/// A clean/noisy pair with both spectrograms precomputed.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub clean: Waveform,
    pub noisy: Waveform,
    pub clean_spec: ComplexSpectrogram,
    pub noisy_spec: ComplexSpectrogram,
}

impl TrainPair {
    pub fn new(clean: Waveform, noisy: Waveform, cfg: &StftConfig) -> Result<Self> {
        if clean.len() != noisy.len() {
            return Err(Error::shape(format!(
                "clean has {} samples, noisy {}",
                clean.len(),
                noisy.len()
            )));
        }
        Ok(Self {
            clean_spec: stft(&clean, cfg)?,
            noisy_spec: stft(&noisy, cfg)?,
            clean,
            noisy,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<TrainPair>,
    pub valid: Vec<TrainPair>,
}

impl Dataset {
    /// Renders every recipe; recipes of the last `valid_fraction` of distinct
    /// utterances (at least one when the fraction is positive and more than
    /// one utterance is present) form the validation split.
    pub fn from_grid(
        corpus: &[Utterance],
        noise: &NoiseGenerator,
        grid: &[MixRecipe],
        valid_fraction: f64,
        stft_cfg: &StftConfig,
    ) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Empty("training grid is empty"));
        }
        let ids: Vec<&str> = {
            let mut seen = BTreeSet::new();
            grid.iter()
                .filter(|r| seen.insert(r.utterance_id.as_str()))
                .map(|r| r.utterance_id.as_str())
                .collect()
        };
        let mut n_valid = (valid_fraction.clamp(0.0, 1.0) * ids.len() as f64).round() as usize;
        if valid_fraction > 0.0 && ids.len() > 1 {
            n_valid = n_valid.clamp(1, ids.len() - 1);
        }
        let held: BTreeSet<&str> = ids[ids.len() - n_valid..].iter().copied().collect();
        let mut data = Self::default();
        for r in grid {
            let (clean, mix) = render_recipe(corpus, noise, r)?;
            let pair = TrainPair::new(clean, mix.noisy, stft_cfg)?;
            if held.contains(r.utterance_id.as_str()) {
                data.valid.push(pair);
            } else {
                data.train.push(pair);
            }
        }
        Ok(data)
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub sisdr: f64,
    pub stoi: Option<f64>,
    pub lsd: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub sisdr_db: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Loss and parameter gradient of one pair, accumulated into `grad`.
pub fn accumulate_gradient(model: &Model, pair: &TrainPair, tcfg: &TrainConfig, grad: &mut Model) -> Result<LossTerms> {
    let x = spectrogram_tensor(&pair.noisy_spec);
    let (y, cache) = model.forward_cached(&x)?;
    let enh = tensor_spectrogram(&y, &pair.noisy_spec);
    let (terms, g) = loss_and_grad(&enh, &pair.clean, &pair.clean_spec, tcfg.loss_alpha, tcfg.loss)?;
    if !terms.total.is_finite() {
        return Err(Error::Numeric("non-finite training loss".into()));
    }
    model.backward(&cache, &spectrogram_tensor(&g), grad)?;
    Ok(terms)
}

pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = TrainState::new(model.num_params(), config.lr);
        Ok(Self { model, config, state })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        c.train_config.validate()?;
        if c.state.adam.m.len() != c.model.num_params() {
            return Err(Error::Format("optimizer state does not match the model".into()));
        }
        Ok(Self {
            model: c.model,
            config: c.train_config,
            state: c.state,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            train_config: self.config.clone(),
            state: self.state.clone(),
        }
    }

    /// One optimizer step on the mean gradient over `batch`.
    pub fn step(&mut self, batch: &[&TrainPair]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::Empty("batch is empty"));
        }
        let mut grad = self.model.zeros_like();
        let (mut loss, mut sisdr_db) = (0.0, 0.0);
        for pair in batch {
            let t = accumulate_gradient(&self.model, pair, &self.config, &mut grad)?;
            loss += t.total;
            sisdr_db += t.sisdr_db;
        }
        let n = batch.len() as f64;
        let mut g = grad.flatten();
        g.iter_mut().for_each(|v| *v /= n);
        let grad_norm = clip_global_norm(&mut g, self.config.grad_clip_norm);
        if !grad_norm.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let mut p = self.model.flatten();
        self.state.adam.step(&mut p, &g, self.state.lr);
        self.model.set_flat(&p);
        self.state.step += 1;
        Ok(StepStats {
            loss: loss / n,
            sisdr_db: sisdr_db / n,
            grad_norm,
        })
    }

    /// Mean loss and metrics of the current model over `pairs`.
    pub fn validate(&self, pairs: &[TrainPair]) -> Result<(f64, f64, f64, f64)> {
        if pairs.is_empty() {
            return Err(Error::Empty("validation set is empty"));
        }
        let (mut l, mut s, mut st, mut ls) = (0.0, 0.0, 0.0, 0.0);
        for pair in pairs {
            let enh = self.model.forward(&pair.noisy_spec)?;
            let wave = istft(&enh, pair.clean.len())?;
            let (terms, _) = loss_and_grad(
                &enh,
                &pair.clean,
                &pair.clean_spec,
                self.config.loss_alpha,
                self.config.loss,
            )?;
            l += terms.total;
            s += sisdr(&pair.clean, &wave)?;
            st += stoi(&pair.clean, &wave)?;
            ls += lsd(&pair.clean_spec, &enh)?;
        }
        let n = pairs.len() as f64;
        Ok((l / n, s / n, st / n, ls / n))
    }

    /// Trains one epoch over a seeded shuffle, validates, and updates the
    /// learning-rate schedule. Returns whether validation loss improved.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<bool> {
        if data.train.is_empty() {
            return Err(Error::Empty("training set is empty"));
        }
        let epoch = self.state.epoch + 1;
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            self.config.seed,
            epoch as u64,
        )));
        let (mut loss, mut sisdr_db, mut steps) = (0.0, 0.0, 0);
        for chunk in order.chunks(self.config.batch) {
            let batch: Vec<&TrainPair> = chunk.iter().map(|&i| &data.train[i]).collect();
            let s = self.step(&batch)?;
            loss += s.loss;
            sisdr_db += s.sisdr_db;
            steps += 1;
        }
        self.state.history.push(EpochRecord {
            epoch,
            split: "train".into(),
            loss: loss / steps as f64,
            sisdr: sisdr_db / steps as f64,
            stoi: None,
            lsd: None,
        });
        let valid = if data.valid.is_empty() {
            &data.train
        } else {
            &data.valid
        };
        let (vl, vs, vst, vlsd) = self.validate(valid)?;
        self.state.history.push(EpochRecord {
            epoch,
            split: "valid".into(),
            loss: vl,
            sisdr: vs,
            stoi: Some(vst),
            lsd: Some(vlsd),
        });
        self.state.epoch = epoch;
        let improved = self.state.best_valid.map_or(true, |b| vl < b);
        if improved {
            self.state.best_valid = Some(vl);
            self.state.stall = 0;
        } else {
            self.state.stall += 1;
            if self.state.stall >= self.config.lr_patience {
                self.state.lr *= self.config.lr_decay;
                self.state.stall = 0;
            }
        }
        Ok(improved)
    }
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const LAST_CHECKPOINT: &str = "last.dnpc";
pub const BEST_CHECKPOINT: &str = "best.dnpc";

pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
}

pub fn write_metrics_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for r in history {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}

/// Runs `trainer` until `config.epochs` epochs have completed. With an output
/// directory, the metrics log and the last and best checkpoints are rewritten
/// after every epoch.
pub fn train_from(mut trainer: Trainer, data: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(Error::Empty("training set is empty"));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut best = None;
    while trainer.state.epoch < trainer.config.epochs {
        let improved = trainer.run_epoch(data)?;
        if improved || best.is_none() {
            let c = trainer.checkpoint();
            if let Some(dir) = out_dir {
                c.save(dir.join(BEST_CHECKPOINT))?;
            }
            best = Some(c);
        }
        if let Some(dir) = out_dir {
            trainer.checkpoint().save(dir.join(LAST_CHECKPOINT))?;
            write_metrics_csv(dir.join(METRICS_FILE), &trainer.state.history)?;
        }
    }
    let last = trainer.checkpoint();
    Ok(TrainOutcome {
        best: best.unwrap_or_else(|| last.clone()),
        last,
    })
}

pub fn train(model: Model, data: &Dataset, tcfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    train_from(Trainer::new(model, tcfg.clone())?, data, out_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverfitReport {
    pub steps: usize,
    pub sisdr_noisy: f64,
    pub sisdr_initial: f64,
    pub sisdr_enhanced: f64,
    pub losses: Vec<f64>,
}

impl OverfitReport {
    pub fn gain_db(&self) -> f64 {
        self.sisdr_enhanced - self.sisdr_noisy
    }
}

/// Trains a fresh model on one noisy/clean pair for `steps` steps.
pub fn overfit_single(
    model_cfg: &ModelConfig,
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    steps: usize,
    tcfg: &TrainConfig,
) -> Result<(OverfitReport, Model)> {
    let mix = mix_at_snr(clean, noise, snr_db, tcfg.seed)?;
    let pair = TrainPair::new(clean.clone(), mix.noisy, &model_cfg.stft)?;
    let mut trainer = Trainer::new(Model::build(model_cfg)?, tcfg.clone())?;
    let sisdr_initial = sisdr(clean, &trainer.model.enhance(&pair.noisy)?)?;
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        losses.push(trainer.step(&[&pair])?.loss);
    }
    let report = OverfitReport {
        steps,
        sisdr_noisy: sisdr(clean, &pair.noisy)?,
        sisdr_initial,
        sisdr_enhanced: sisdr(clean, &trainer.model.enhance(&pair.noisy)?)?,
        losses,
    };
    Ok((report, trainer.model))
}

#[cfg(test)]
mod tests;
