use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::{EpochRecord, TrainConfig};
use crate::error::{Error, Result};
use crate::network::{Model, MODEL_CONFIG_KEY};
use crate::params::{NamedTensor, ParamContainer};

/// Optimizer and schedule state carried across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub adam: Adam,
    pub lr: f64,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub best_valid: Option<f64>,
    pub stall: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            adam: Adam::new(n_params),
            lr,
            epoch: 0,
            step: 0,
            best_valid: None,
            stall: 0,
            history: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    lr: f64,
    epoch: usize,
    step: u64,
    adam_t: u64,
    best_valid: Option<f64>,
    stall: usize,
    history: Vec<EpochRecord>,
}

const ADAM_M: &str = "optim.adam.m";
const ADAM_V: &str = "optim.adam.v";

/// Model, optimizer state, epoch counter and metric history in one
/// parameter container. Reloading reproduces forward outputs and the next
/// training step bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub train_config: TrainConfig,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn to_container(&self) -> Result<ParamContainer> {
        let mut c = self.model.to_container()?;
        let s = &self.state;
        let meta = StateMeta {
            lr: s.lr,
            epoch: s.epoch,
            step: s.step,
            adam_t: s.adam.t,
            best_valid: s.best_valid,
            stall: s.stall,
            history: s.history.clone(),
        };
        c.meta["train_config"] = serde_json::to_value(&self.train_config)?;
        c.meta["train_state"] = serde_json::to_value(meta)?;
        for (name, data) in [(ADAM_M, &s.adam.m), (ADAM_V, &s.adam.v)] {
            c.tensors.push(NamedTensor {
                name: name.into(),
                shape: vec![data.len()],
                data: data.clone(),
            });
        }
        Ok(c)
    }

    pub fn from_container(c: &ParamContainer) -> Result<Self> {
        if c.meta.get(MODEL_CONFIG_KEY).is_none() {
            return Err(Error::Format("checkpoint has no model configuration".into()));
        }
        let model = Model::from_container(c)?;
        let field = |key: &str| {
            c.meta
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Format(format!("checkpoint has no '{key}' entry")))
        };
        let train_config: TrainConfig = serde_json::from_value(field("train_config")?)?;
        let meta: StateMeta = serde_json::from_value(field("train_state")?)?;
        let tensor = |name: &str| {
            c.get(name)
                .map(|t| t.data.clone())
                .ok_or_else(|| Error::Format(format!("checkpoint has no '{name}' tensor")))
        };
        let adam = Adam {
            m: tensor(ADAM_M)?,
            v: tensor(ADAM_V)?,
            t: meta.adam_t,
        };
        Ok(Self {
            model,
            train_config,
            state: TrainState {
                adam,
                lr: meta.lr,
                epoch: meta.epoch,
                step: meta.step,
                best_valid: meta.best_valid,
                stall: meta.stall,
                history: meta.history,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&ParamContainer::read(path)?)
    }
}
