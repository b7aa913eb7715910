//! Pretraining and supervised training loops.
//!
//! Every random decision is drawn from a stream keyed by the run seed and the
//! position of the structure in the data order, so a run is a pure function
//! of `(config, data)` and can be resumed from `(params, optimizer, step)`.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{Real, Tape, Var};
use crate::encoder::{denoise, EncoderConfig, ModelLayout, Readouts};
use crate::error::{Error, Result};
use crate::linalg3::Vec3;
use crate::losses::{anids_loss_from_noise, gamma_hinge, kl_loss, supervised_losses, LossBreakdown, LossWeights};
use crate::moldata::{Molecule, NeighborList};
use crate::noisegen::{draw_noise, generate, perturb, CovarianceSet, NoiseKey, NoiseMode};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    pub weights: LossWeights,
    pub optimizer: AdamWConfig,
    /// Prior noise scale σ_p, Å.
    pub sigma_p: f64,
    /// Target anisotropic mass of the hinge regulariser.
    pub kappa: f64,
    /// Probability that a structure takes the corrupted branch in supervised training.
    pub p_anids: f64,
    /// Per-atom corruption rate inside that branch.
    pub r_anids: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    /// Shared noise scale of the fixed isotropic mode, Å. Defaults to `sigma_p`.
    pub dens_sigma: Option<f64>,
    pub freeze_generator: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            weights: LossWeights::default(),
            optimizer: AdamWConfig::default(),
            sigma_p: 0.1,
            kappa: 0.5,
            p_anids: 0.25,
            r_anids: 0.25,
            batch_size: 8,
            seed: 0,
            noise_mode: NoiseMode::Anids,
            dens_sigma: None,
            freeze_generator: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.weights.validate()?;
        self.optimizer.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.sigma_p > 0.0 && self.sigma_p.is_finite()) {
            return bad("sigma_p must be positive");
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return bad("kappa must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.p_anids) || !(0.0..=1.0).contains(&self.r_anids) {
            return bad("p_anids and r_anids must lie in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if let Some(s) = self.dens_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad("dens_sigma must be positive");
            }
        }
        Ok(())
    }

    pub fn dens_sigma(&self) -> f64 {
        self.dens_sigma.unwrap_or(self.sigma_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Phase {
    /// Every atom perturbed, denoising and regularisers only.
    Pretrain,
    /// Labelled data, optional partial corruption.
    Supervised,
}

/// Random decisions for one structure in one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureDraw {
    pub corrupt: bool,
    pub mask: Vec<bool>,
    pub noise: Vec<Vec3>,
}

/// Corruption branch, atom mask and noise for structure `index` in `epoch`.
///
/// A corrupted branch whose mask comes out empty falls back to the clean branch.
pub fn draw_structure(cfg: &TrainConfig, phase: Phase, epoch: u64, index: u64, n_atoms: usize) -> StructureDraw {
    let mask = match phase {
        Phase::Pretrain => alloc::vec![true; n_atoms],
        Phase::Supervised if cfg.p_anids == 0.0 => alloc::vec![false; n_atoms],
        Phase::Supervised => {
            let mut r = rng::stream(cfg.seed, Purpose::Corruption, &[epoch, index]);
            if r.random::<f64>() < cfg.p_anids {
                (0..n_atoms).map(|_| r.random::<f64>() < cfg.r_anids).collect()
            } else {
                alloc::vec![false; n_atoms]
            }
        }
    };
    let corrupt = mask.iter().any(|&m| m);
    let noise = if corrupt {
        draw_noise(NoiseKey { seed: cfg.seed, epoch, frame: index }, &mask)
    } else {
        alloc::vec![Vec3::zero(); n_atoms]
    };
    StructureDraw { corrupt, mask, noise }
}

/// Loss of one structure under fixed random draws.
///
/// Generic so that the same code gives values for finite differences and
/// gradients on a tape. Terms whose weight is zero are skipped.
pub fn molecule_objective<T: Real>(
    model: &ModelLayout,
    cfg: &TrainConfig,
    params: &[T],
    mol: &Molecule,
    draw: &StructureDraw,
    phase: Phase,
) -> Result<LossBreakdown<T>> {
    model.check(params.len())?;
    let w = match phase {
        Phase::Pretrain => LossWeights { energy: 0.0, force: 0.0, ..cfg.weights },
        Phase::Supervised => cfg.weights,
    };
    let cutoff = model.config.cutoff;
    let supervised = w.energy > 0.0 || w.force > 0.0;
    let graph = NeighborList::from_positions(&mol.positions, cutoff)?;
    let zero = T::zero();

    if !draw.corrupt {
        if !supervised {
            return Ok(LossBreakdown::weighted(zero, zero, zero, zero, zero, &w));
        }
        let x: Vec<Vec3<T>> = mol.positions.iter().map(|&p| Vec3::lift(p)).collect();
        let readouts = Readouts { noise: false, energy_forces: true };
        let out = denoise(&model.denoiser, params, &mol.atomic_numbers, &x, &graph, None, readouts)?;
        let (e, f) = supervised_losses(mol, out.energy, &out.forces, &draw.mask)?;
        return Ok(LossBreakdown::weighted(zero, zero, zero, e, f, &w));
    }

    let mode = cfg.noise_mode;
    let cov: CovarianceSet<T> =
        generate(&model.generator, params, &mol.atomic_numbers, &mol.positions, &graph, mode, cfg.dens_sigma())?;
    let kl = if w.kl > 0.0 { kl_loss(&cov, cfg.sigma_p)? } else { zero };
    let gamma = if w.gamma > 0.0 && mode == NoiseMode::Anids { gamma_hinge(&cov.gamma_masses(), cfg.kappa) } else { zero };

    let readouts = Readouts { noise: w.anids > 0.0, energy_forces: phase == Phase::Supervised && supervised };
    let (mut anids, mut e, mut f) = (zero, zero, zero);
    if readouts.noise || readouts.energy_forces {
        let pert = perturb(&mol.positions, &cov, draw.noise.clone(), &draw.mask);
        let pgraph = NeighborList::from_positions(&pert.perturbed_values(), cutoff)?;
        let features: Option<Vec<Vec3>> = match phase {
            Phase::Supervised => {
                let (_, labels) = mol.labels()?;
                Some(labels.iter().zip(&draw.mask).map(|(&f, &m)| if m { f } else { Vec3::zero() }).collect())
            }
            Phase::Pretrain => None,
        };
        let out = denoise(&model.denoiser, params, &mol.atomic_numbers, &pert.perturbed, &pgraph, features.as_deref(), readouts)?;
        if readouts.noise {
            anids = anids_loss_from_noise(&pert, &cov, &out.noise)?;
        }
        if readouts.energy_forces {
            (e, f) = supervised_losses(mol, out.energy, &out.forces, &draw.mask)?;
        }
    }
    Ok(LossBreakdown::weighted(anids, kl, gamma, e, f, &w))
}

/// A structure picked for a step, with its epoch and dataset index.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub epoch: u64,
    pub index: usize,
    pub mol: &'a Molecule,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: u64,
    pub phase: Phase,
    pub losses: LossBreakdown,
}

/// Force and energy errors of the clean-structure predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForceMetrics {
    /// Mean absolute force component error, eV/Å.
    pub force_mae: f64,
    /// Root mean square of the reference force components, eV/Å.
    pub force_rms: f64,
    /// Cosine between predicted and reference forces, flattened over the whole set.
    pub force_cosine: f64,
    pub energy_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub model: ModelLayout,
    pub params: Vec<f64>,
    pub optimizer: AdamW,
    /// Steps taken so far; keys the batch order.
    pub step: u64,
    pub log: Vec<StepRecord>,
}

impl TrainRun {
    /// Fresh parameters from the configured seed.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = ModelLayout::new(&config.encoder)?;
        let params = model.init(config.seed, config.sigma_p);
        let optimizer = AdamW::new(config.optimizer, model.len());
        Ok(Self { config, model, params, optimizer, step: 0, log: Vec::new() })
    }

    /// Reassembles a run from saved state.
    pub fn restore(config: TrainConfig, params: Vec<f64>, optimizer: AdamW, step: u64, log: Vec<StepRecord>) -> Result<Self> {
        config.validate()?;
        let model = ModelLayout::new(&config.encoder)?;
        model.check(params.len())?;
        model.check(optimizer.m.len())?;
        model.check(optimizer.v.len())?;
        Ok(Self { config, model, params, optimizer, step, log })
    }

    /// Structures for the current step: consecutive slots of a per-epoch permutation.
    pub fn next_batch<'a>(&self, data: &'a [Molecule]) -> Result<Vec<BatchItem<'a>>> {
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = data.len() as u64;
        let b = self.config.batch_size as u64;
        let mut perm: Option<(u64, Vec<usize>)> = None;
        (0..b)
            .map(|k| {
                let g = self.step * b + k;
                let epoch = g / n;
                if perm.as_ref().is_none_or(|(e, _)| *e != epoch) {
                    let mut p: Vec<usize> = (0..data.len()).collect();
                    p.shuffle(&mut rng::stream(self.config.seed, Purpose::Shuffle, &[epoch]));
                    perm = Some((epoch, p));
                }
                let index = perm.as_ref().map(|(_, p)| p[(g % n) as usize]).unwrap_or(0);
                Ok(BatchItem { epoch, index, mol: &data[index] })
            })
            .collect()
    }

    pub fn draw(&self, item: &BatchItem<'_>, phase: Phase) -> StructureDraw {
        draw_structure(&self.config, phase, item.epoch, item.index as u64, item.mol.len())
    }

    /// Mean loss over `items` and its gradient. Frozen generator parameters
    /// enter as constants and get zero gradient.
    pub fn gradient(&self, items: &[BatchItem<'_>], phase: Phase, freeze_generator: bool) -> Result<(LossBreakdown, Vec<f64>)> {
        if items.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let scale = 1.0 / items.len() as f64;
        let mut grad = alloc::vec![0.0; self.params.len()];
        let mut parts = Vec::with_capacity(items.len());
        let frozen = if freeze_generator { self.model.generator_range.clone() } else { 0..0 };
        for item in items {
            let draw = self.draw(item, phase);
            let tape = Tape::new();
            let vars: Vec<Var<'_>> = self
                .params
                .iter()
                .enumerate()
                .map(|(k, &v)| if frozen.contains(&k) { Var::constant(v) } else { tape.var(v) })
                .collect();
            let loss = molecule_objective(&self.model, &self.config, &vars, item.mol, &draw, phase)?;
            let adj = tape.backward(loss.total);
            for (g, v) in grad.iter_mut().zip(&vars) {
                *g += adj.wrt(*v) * scale;
            }
            parts.push(loss.value());
        }
        Ok((LossBreakdown::mean(&parts), grad))
    }

    fn train_step(&mut self, data: &[Molecule], phase: Phase, freeze_generator: bool) -> Result<LossBreakdown> {
        let items = self.next_batch(data)?;
        let (losses, grad) = self.gradient(&items, phase, freeze_generator)?;
        let active = if freeze_generator { self.model.denoiser_range.clone() } else { 0..self.params.len() };
        self.optimizer.step(&mut self.params, &grad, active)?;
        self.log.push(StepRecord { step: self.step, phase, losses });
        self.step += 1;
        Ok(losses)
    }

    /// Self-supervised step on a batch drawn from `data`; every atom perturbed.
    pub fn pretrain_step(&mut self, data: &[Molecule]) -> Result<LossBreakdown> {
        self.train_step(data, Phase::Pretrain, self.config.freeze_generator)
    }

    /// Labelled step with partial corruption.
    pub fn supervised_step(&mut self, data: &[Molecule]) -> Result<LossBreakdown> {
        self.train_step(data, Phase::Supervised, self.config.freeze_generator)
    }

    /// Labelled step with the generator held fixed.
    pub fn finetune(&mut self, data: &[Molecule]) -> Result<LossBreakdown> {
        self.train_step(data, Phase::Supervised, true)
    }

    /// Energy and forces of a clean structure.
    pub fn predict(&self, mol: &Molecule) -> Result<(f64, Vec<Vec3>)> {
        let graph = NeighborList::from_positions(&mol.positions, self.model.config.cutoff)?;
        let readouts = Readouts { noise: false, energy_forces: true };
        let out = denoise(&self.model.denoiser, &self.params, &mol.atomic_numbers, &mol.positions, &graph, None, readouts)?;
        Ok((out.energy, out.forces))
    }

    /// Generator covariances for a clean structure in the configured mode.
    pub fn covariances(&self, mol: &Molecule) -> Result<CovarianceSet> {
        let graph = NeighborList::from_positions(&mol.positions, self.model.config.cutoff)?;
        generate(
            &self.model.generator,
            &self.params,
            &mol.atomic_numbers,
            &mol.positions,
            &graph,
            self.config.noise_mode,
            self.config.dens_sigma(),
        )
    }

    pub fn evaluate(&self, data: &[Molecule]) -> Result<ForceMetrics> {
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let (mut abs, mut sq, mut dot, mut pp, mut e_abs, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
        for mol in data {
            let (e_ref, f_ref) = mol.labels()?;
            let (e, f) = self.predict(mol)?;
            e_abs += (e - e_ref).abs();
            for (a, b) in f.iter().zip(f_ref) {
                for (p, r) in a.to_array().into_iter().zip(b.to_array()) {
                    abs += (p - r).abs();
                    sq += r * r;
                    dot += p * r;
                    pp += p * p;
                    count += 1;
                }
            }
        }
        let c = count.max(1) as f64;
        let denom = libm::sqrt(pp * sq);
        Ok(ForceMetrics {
            force_mae: abs / c,
            force_rms: libm::sqrt(sq / c),
            force_cosine: if denom > 0.0 { dot / denom } else { 0.0 },
            energy_mae: e_abs / data.len() as f64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moldata::{Bond, ToyPotential};
    use alloc::vec;

    fn small_config() -> TrainConfig {
        TrainConfig {
            encoder: EncoderConfig { dim: 6, layers: 1, n_rbf: 4, cutoff: 3.0, max_z: 10 },
            batch_size: 2,
            seed: 17,
            ..Default::default()
        }
    }

    fn triatomic(shift: f64) -> Molecule {
        let x = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0 + shift, 0.1, 0.0), Vec3::new(-0.2, 1.1, 0.3 * shift)];
        let pot = ToyPotential::harmonic(vec![], vec![Bond { i: 0, j: 1, k: 5.0, r0: 1.0 }, Bond { i: 0, j: 2, k: 5.0, r0: 1.0 }])
            .with_offset(-1.0);
        let (e, f) = pot.energy_and_forces(&x);
        Molecule::new(vec![8, 1, 1], x).unwrap().with_labels(e, f).unwrap()
    }

    fn data() -> Vec<Molecule> {
        (0..5).map(|k| triatomic(0.05 * k as f64)).collect()
    }

    #[test]
    fn mask_rate_matches_binomial() {
        let cfg = TrainConfig { p_anids: 1.0, r_anids: 0.25, ..small_config() };
        let (mut hits, mut total) = (0usize, 0usize);
        for s in 0..10_000 {
            let d = draw_structure(&cfg, Phase::Supervised, 0, s, 3);
            hits += d.mask.iter().filter(|&&m| m).count();
            total += 3;
        }
        let p = hits as f64 / total as f64;
        let se = libm::sqrt(0.25 * 0.75 / total as f64);
        assert!((p - 0.25).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn zero_corruption_probability_skips_the_generator() {
        let cfg = TrainConfig { p_anids: 0.0, ..small_config() };
        let mut run = TrainRun::new(cfg).unwrap();
        let gen = run.model.generator_range.clone();
        run.params[gen].iter_mut().for_each(|p| *p = f64::NAN);
        let l = run.supervised_step(&data()).unwrap();
        assert!(l.is_finite());
        assert_eq!((l.anids, l.kl, l.gamma), (0.0, 0.0, 0.0));
    }

    #[test]
    fn full_mask_zeroes_the_force_term() {
        let cfg = TrainConfig { p_anids: 1.0, r_anids: 1.0, ..small_config() };
        let run = TrainRun::new(cfg).unwrap();
        let d = data();
        let item = BatchItem { epoch: 0, index: 0, mol: &d[0] };
        let draw = run.draw(&item, Phase::Supervised);
        assert!(draw.corrupt && draw.mask.iter().all(|&m| m));
        let l = molecule_objective(&run.model, &run.config, &run.params, &d[0], &draw, Phase::Supervised).unwrap();
        assert_eq!(l.force, 0.0);
        assert!(l.anids > 0.0);
    }

    #[test]
    fn fixed_seed_replays_identically() {
        let d = data();
        let mut a = TrainRun::new(small_config()).unwrap();
        let mut b = TrainRun::new(small_config()).unwrap();
        for _ in 0..4 {
            assert_eq!(a.pretrain_step(&d).unwrap(), b.pretrain_step(&d).unwrap());
        }
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn finetune_freezes_the_generator_bitwise() {
        let cfg = TrainConfig { p_anids: 0.5, r_anids: 0.5, ..small_config() };
        let mut run = TrainRun::new(cfg).unwrap();
        let d = data();
        let before = run.params.clone();
        for _ in 0..20 {
            run.finetune(&d).unwrap();
        }
        let g = run.model.generator_range.clone();
        let den = run.model.denoiser_range.clone();
        assert!(run.params[g.clone()].iter().zip(&before[g]).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_ne!(run.params[den.clone()], before[den]);
    }

    #[test]
    fn first_step_loss_matches_direct_evaluation() {
        let d = data();
        let mut run = TrainRun::new(small_config()).unwrap();
        let items = run.next_batch(&d).unwrap();
        let direct: Vec<LossBreakdown> = items
            .iter()
            .map(|it| molecule_objective(&run.model, &run.config, &run.params, it.mol, &run.draw(it, Phase::Pretrain), Phase::Pretrain).unwrap())
            .collect();
        let expect = LossBreakdown::mean(&direct);
        let got = run.pretrain_step(&d).unwrap();
        assert!((got.total - expect.total).abs() <= 1e-12 * expect.total.abs());
        assert!((got.anids - expect.anids).abs() <= 1e-12 * expect.anids.abs());
    }

    #[test]
    fn tape_gradient_matches_finite_differences() {
        let d = data();
        let cfg = TrainConfig { p_anids: 1.0, r_anids: 0.5, ..small_config() };
        let run = TrainRun::new(cfg).unwrap();
        let item = BatchItem { epoch: 0, index: 2, mol: &d[2] };
        for phase in [Phase::Pretrain, Phase::Supervised] {
            let (_, grad) = run.gradient(&[item], phase, false).unwrap();
            let draw = run.draw(&item, phase);
            let f = |p: &[f64]| molecule_objective(&run.model, &run.config, p, item.mol, &draw, phase).unwrap().total;
            for k in (0..run.params.len()).step_by(7) {
                let h = 1e-6 * run.params[k].abs().max(1.0);
                let mut p = run.params.clone();
                p[k] += h;
                let up = f(&p);
                p[k] -= 2.0 * h;
                let down = f(&p);
                let fd = (up - down) / (2.0 * h);
                let tol = 1e-4 * fd.abs().max(grad[k].abs()) + 1e-7;
                assert!((fd - grad[k]).abs() <= tol, "param {k}: {} vs {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let d = data();
        let mut run = TrainRun::new(TrainConfig { batch_size: 1, ..small_config() }).unwrap();
        let mut seen = Vec::new();
        for _ in 0..5 {
            seen.push(run.next_batch(&d).unwrap()[0].index);
            run.step += 1;
        }
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(TrainRun::new(TrainConfig { kappa: 1.0, ..small_config() }).is_err());
        assert!(TrainRun::new(TrainConfig { sigma_p: 0.0, ..small_config() }).is_err());
        assert!(TrainRun::new(TrainConfig { p_anids: 1.5, ..small_config() }).is_err());
        assert!(TrainRun::new(TrainConfig { batch_size: 0, ..small_config() }).is_err());
    }
}
