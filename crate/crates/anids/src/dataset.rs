//! Generated datasets: one extxyz file plus a JSON manifest with the split.

use std::path::{Path, PathBuf};

use anids_core::moldata::{sample_boltzmann, LangevinConfig, Molecule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::{extxyz, Error};

pub const FRAMES_FILE: &str = "frames.extxyz";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub frames_file: String,
    /// Hex SHA-256 of the frames file.
    pub sha256: String,
    pub n_frames: usize,
    pub kt: f64,
    pub seed: u64,
    pub langevin: LangevinConfig,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Trailing `ceil(fraction · n)` frames are held out; consecutive Langevin
/// frames are correlated, so a contiguous tail keeps the split honest.
pub fn split(n: usize, val_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((val_fraction.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n);
    ((0..n - n_val).collect(), (n - n_val..n).collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Samples frames from the configured potential and writes them under `out`.
pub fn generate(config: &Config, out: &Path) -> Result<Manifest, Error> {
    let pot = config.potential()?;
    let d = &config.data;
    let start = Molecule::new(d.atomic_numbers.clone(), d.positions.clone())?;
    if start.is_empty() {
        return Err(Error::Invalid("[data] needs a starting structure".into()));
    }
    let langevin = d.langevin.unwrap_or_else(|| LangevinConfig::for_potential(pot, start.len()));
    let frames = sample_boltzmann(pot, &start, d.n_frames, d.kt, d.seed, &langevin)?;
    let text = extxyz::to_string(&frames);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let frames_path = out.join(FRAMES_FILE);
    std::fs::write(&frames_path, &text).map_err(|e| Error::io(&frames_path, e))?;
    let (train, val) = split(frames.len(), d.val_fraction);
    let manifest = Manifest {
        frames_file: FRAMES_FILE.into(),
        sha256: sha256_hex(text.as_bytes()),
        n_frames: frames.len(),
        kt: d.kt,
        seed: d.seed,
        langevin,
        train,
        val,
    };
    let path = out.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(Error::Json)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<Molecule>,
    pub val: Vec<Molecule>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, Error> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(Error::Json)?;
        let frames_path: PathBuf = dir.join(&manifest.frames_file);
        let text = std::fs::read_to_string(&frames_path).map_err(|e| Error::io(&frames_path, e))?;
        if sha256_hex(text.as_bytes()) != manifest.sha256 {
            return Err(Error::Invalid(format!("{}: contents do not match the manifest checksum", frames_path.display())));
        }
        let frames = extxyz::parse(&text).map_err(|e| Error::Parse { path: frames_path.clone(), source: e })?;
        if frames.len() != manifest.n_frames {
            return Err(Error::Invalid(format!(
                "{}: manifest lists {} frames, file has {}",
                frames_path.display(),
                manifest.n_frames,
                frames.len()
            )));
        }
        let pick = |idx: &[usize]| -> Result<Vec<Molecule>, Error> {
            idx.iter()
                .map(|&i| frames.get(i).cloned().ok_or_else(|| Error::Invalid(format!("manifest index {i} out of range"))))
                .collect()
        };
        let train = pick(&manifest.train)?;
        let val = pick(&manifest.val)?;
        Ok(Self { manifest, train, val })
    }
}
