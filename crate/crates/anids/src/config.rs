//! Run configuration, read from a TOML file.
//!
//! ```toml
//! [data]
//! atomic_numbers = [1, 1]
//! positions = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]   # Å, starting structure
//! n_frames = 1000
//! kt = 0.1                                         # eV
//! val_fraction = 0.1                               # trailing frames held out
//! seed = 0
//! # optional; derived from the potential when absent
//! # langevin = { dt = 0.001, stride = 10, burn_in = 100 }
//!
//! [potential]
//! kind = "harmonic"                                # or "lennard-jones" with epsilon, sigma
//! energy_offset = -1.0
//! bonds = [{ i = 0, j = 1, k = 10.0, r0 = 1.0 }]
//! tethers = [{ atom = 0, k = 1.0, anchor = [0.0, 0.0, 0.0] }]
//!
//! [train]
//! sigma_p = 0.1
//! kappa = 0.5
//! p_anids = 0.25
//! r_anids = 0.25
//! batch_size = 8
//! seed = 0
//! noise_mode = "anids"                             # "anids" | "denoisevae" | "dens"
//! # dens_sigma = 0.1
//! freeze_generator = false
//! [train.encoder]
//! dim = 64
//! layers = 2
//! n_rbf = 16
//! cutoff = 5.0
//! max_z = 20
//! [train.weights]
//! anids = 1.0
//! kl = 1.0
//! gamma = 1.0
//! energy = 1.0
//! force = 1.0
//! [train.optimizer]
//! lr = 1e-3
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! weight_decay = 0.0
//!
//! [schedule]
//! steps = 100
//! eval_every = 0                                   # 0: evaluate once at the end
//!
//! [probe]
//! delta = 0.05                                     # Å
//! seed = 0
//! ```
//!
//! Every section and key is optional and falls back to the values shown.
//! Unknown keys are rejected.

use std::path::Path;

use anids_core::moldata::{LangevinConfig, ToyPotential};
use anids_core::trainer::TrainConfig;
use anids_core::Vec3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<Vec3>,
    pub n_frames: usize,
    pub kt: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub langevin: Option<LangevinConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            atomic_numbers: Vec::new(),
            positions: Vec::new(),
            n_frames: 100,
            kt: 0.1,
            val_fraction: 0.1,
            seed: 0,
            langevin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub steps: u64,
    pub eval_every: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { steps: 100, eval_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub delta: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { delta: anids_core::analysis::DEFAULT_PROBE_DELTA, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    pub potential: Option<ToyPotential>,
    pub train: TrainConfig,
    pub schedule: Schedule,
    pub probe: ProbeConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// `--seed` replaces both the data and training seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.train.seed = seed;
    }

    pub fn potential(&self) -> Result<&ToyPotential, Error> {
        self.potential
            .as_ref()
            .ok_or_else(|| Error::Invalid("config has no [potential] section".into()))
    }
}

/// Hex SHA-256 of the canonical JSON form of the training settings.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).expect("train config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
