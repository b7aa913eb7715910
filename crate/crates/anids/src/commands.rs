//! The work behind each CLI verb, callable without a process boundary.

use std::path::{Path, PathBuf};

use anids_core::analysis::{eigen_probe, reduction_suite, EigenProbeReport, ReductionCheck};
use anids_core::moldata::Molecule;
use anids_core::noisegen::NoiseMode;
use anids_core::trainer::{ForceMetrics, Phase, TrainRun};

use crate::checkpoint::Checkpoint;
use crate::config::Config;
use crate::dataset::{self, Dataset, Manifest};
use crate::logfile::{self, EVAL_HEADER, STEP_HEADER};
use crate::{extxyz, Error};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "log.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PROBE_JSON: &str = "probe.json";
pub const PROBE_CSV: &str = "probe.csv";

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noise_mode: Option<NoiseMode>,
    pub freeze_generator: bool,
    pub steps: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut Config) {
        if let Some(s) = self.seed {
            config.set_seed(s);
        }
        if let Some(m) = self.noise_mode {
            config.train.noise_mode = m;
        }
        if self.freeze_generator {
            config.train.freeze_generator = true;
        }
        if let Some(n) = self.steps {
            config.schedule.steps = n;
        }
    }
}

pub fn gen_data(config: &Config, out: &Path) -> Result<Manifest, Error> {
    dataset::generate(config, out)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub first_step: u64,
    pub last: Option<StepRecordSummary>,
    pub metrics: Option<ForceMetrics>,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Copy)]
pub struct StepRecordSummary {
    pub step: u64,
    pub total: f64,
}

fn open_run(config: &Config, checkpoint: Option<&Path>, phase: Phase) -> Result<(TrainRun, bool), Error> {
    let Some(path) = checkpoint else {
        return Ok((TrainRun::new(config.train.clone())?, false));
    };
    let ck = Checkpoint::load(path)?;
    match (phase, ck.phase) {
        (a, b) if a == b => Ok((ck.resume(&config.train)?, true)),
        (Phase::Supervised, Phase::Pretrain) => Ok((ck.warm_start(&config.train)?, false)),
        _ => Err(Error::Invalid(format!("{}: cannot pretrain from a supervised checkpoint", path.display()))),
    }
}

fn run_phase(config: &Config, data: &Path, out: &Path, checkpoint: Option<&Path>, phase: Phase) -> Result<TrainSummary, Error> {
    let ds = Dataset::load(data)?;
    if ds.train.is_empty() {
        return Err(Error::Invalid(format!("{}: no training frames", data.display())));
    }
    let (mut run, resumed) = open_run(config, checkpoint, phase)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let first_step = run.step;
    let end = first_step + config.schedule.steps;
    let every = config.schedule.eval_every;
    let mut evals = Vec::new();
    let evaluate = phase == Phase::Supervised && !ds.val.is_empty();
    while run.step < end {
        match phase {
            Phase::Pretrain => run.pretrain_step(&ds.train)?,
            Phase::Supervised if run.config.freeze_generator => run.finetune(&ds.train)?,
            Phase::Supervised => run.supervised_step(&ds.train)?,
        };
        if evaluate && every > 0 && run.step % every == 0 && run.step < end {
            evals.push(logfile::eval_row(run.step, &run.evaluate(&ds.val)?));
        }
    }
    let metrics = if evaluate { Some(run.evaluate(&ds.val)?) } else { None };
    if let Some(m) = &metrics {
        evals.push(logfile::eval_row(run.step, m));
    }

    let rows: Vec<String> = run.log.iter().map(logfile::step_row).collect();
    logfile::write_rows(&out.join(LOG_FILE), STEP_HEADER, &rows, resumed)?;
    if evaluate {
        logfile::write_rows(&out.join(EVAL_FILE), EVAL_HEADER, &evals, resumed)?;
    }
    if let Some(m) = &metrics {
        let path = out.join(METRICS_FILE);
        let json = serde_json::to_string_pretty(m).map_err(Error::Json)?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    }
    let ck_path = out.join(CHECKPOINT_FILE);
    Checkpoint::from_run(&run, phase).save(&ck_path)?;
    Ok(TrainSummary {
        first_step,
        last: run.log.last().map(|r| StepRecordSummary { step: r.step, total: r.losses.total }),
        metrics,
        checkpoint: ck_path,
    })
}

pub fn pretrain(config: &Config, data: &Path, out: &Path, checkpoint: Option<&Path>) -> Result<TrainSummary, Error> {
    run_phase(config, data, out, checkpoint, Phase::Pretrain)
}

pub fn train(config: &Config, data: &Path, out: &Path, checkpoint: Option<&Path>) -> Result<TrainSummary, Error> {
    run_phase(config, data, out, checkpoint, Phase::Supervised)
}

pub fn read_structure(path: &Path) -> Result<Molecule, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut frames = extxyz::parse(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), source: e })?;
    if frames.is_empty() {
        return Err(Error::Invalid(format!("{}: no structure", path.display())));
    }
    Ok(frames.swap_remove(0))
}

fn probe_csv(report: &EigenProbeReport) -> String {
    let mut s = String::from("atom,direction,eigenvalue,vx,vy,vz,smape,inverse_smape,bond_cosine\n");
    for a in &report.atoms {
        for k in 0..3 {
            let v = a.eigenvectors[k];
            let inv = if a.smape[k] > 0.0 { 1.0 / a.smape[k] } else { f64::INFINITY };
            let cos = a.bond_cosine.map(|c| format!("{c:?}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{k},{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
                a.atom, a.eigenvalues[k], v[0], v[1], v[2], a.smape[k], inv, cos
            ));
        }
    }
    s
}

/// Eigen-decomposes the learned covariance of every atom in `structure` and
/// measures the energy change along each eigenvector.
pub fn probe(config: &Config, checkpoint: &Path, structure: &Path, out: &Path) -> Result<EigenProbeReport, Error> {
    let pot = config.potential()?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut train = ck.config.clone();
    train.noise_mode = config.train.noise_mode;
    let run = ck.warm_start(&train)?;
    let mol = read_structure(structure)?;
    let cov = run.covariances(&mol)?;
    let report = eigen_probe(&cov, &mol.positions, pot, config.probe.delta, config.probe.seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(PROBE_JSON);
    let json = serde_json::to_string_pretty(&report).map_err(Error::Json)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    let path = out.join(PROBE_CSV);
    std::fs::write(&path, probe_csv(&report)).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

pub fn reduce_check(seed: u64, sigma: f64) -> Result<Vec<ReductionCheck>, Error> {
    Ok(reduction_suite(seed, sigma)?)
}
