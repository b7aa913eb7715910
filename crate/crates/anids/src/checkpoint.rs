use std::path::Path;

use anids_core::encoder::ModelLayout;
use anids_core::optim::AdamW;
use anids_core::trainer::{Phase, TrainConfig, TrainRun};
use serde::{Deserialize, Serialize};

use crate::config::config_hash;
use crate::Error;

pub const FORMAT_VERSION: u32 = 1;

/// One named slice of the flat parameter vector, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

/// Everything needed to continue a run bit-for-bit. All randomness is keyed
/// by `(config.seed, step)`, so no generator state is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub phase: Phase,
    pub config_hash: String,
    pub config: TrainConfig,
    pub step: u64,
    /// Index into `params`; derived from `config.encoder` and checked on load.
    pub tensors: Vec<TensorEntry>,
    pub params: Vec<f64>,
    pub optimizer: AdamW,
}

fn tensor_table(model: &ModelLayout) -> Vec<TensorEntry> {
    model
        .params
        .tensors()
        .iter()
        .map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone(), offset: t.offset })
        .collect()
}

impl Checkpoint {
    pub fn from_run(run: &TrainRun, phase: Phase) -> Self {
        Self {
            format: FORMAT_VERSION,
            phase,
            config_hash: config_hash(&run.config),
            config: run.config.clone(),
            step: run.step,
            tensors: tensor_table(&run.model),
            params: run.params.clone(),
            optimizer: run.optimizer.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let text = serde_json::to_string(self).map_err(Error::Json)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text).map_err(Error::Json)?;
        if ck.format != FORMAT_VERSION {
            return Err(Error::Invalid(format!("{}: unsupported checkpoint format {}", path.display(), ck.format)));
        }
        if ck.config_hash != config_hash(&ck.config) {
            return Err(Error::Invalid(format!("{}: config hash does not match stored config", path.display())));
        }
        let model = ModelLayout::new(&ck.config.encoder)?;
        if ck.tensors != tensor_table(&model) || ck.params.len() != model.len() {
            return Err(Error::Invalid(format!("{}: parameter table does not match the encoder settings", path.display())));
        }
        Ok(ck)
    }

    /// Continues the stored run. `config` must hash to the stored value.
    pub fn resume(self, config: &TrainConfig) -> Result<TrainRun, Error> {
        if config_hash(config) != self.config_hash {
            return Err(Error::Invalid("checkpoint was written with different training settings".into()));
        }
        Ok(TrainRun::restore(self.config, self.params, self.optimizer, self.step, Vec::new())?)
    }

    /// Starts a new run from the stored weights with a fresh optimizer.
    pub fn warm_start(self, config: &TrainConfig) -> Result<TrainRun, Error> {
        if config.encoder != self.config.encoder {
            return Err(Error::Invalid("checkpoint encoder settings differ from the config".into()));
        }
        let mut run = TrainRun::new(config.clone())?;
        run.params = self.params;
        Ok(run)
    }
}
