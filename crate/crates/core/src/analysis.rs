//! Post-training diagnostics: directional energy sensitivity of the learned
//! covariances, rank correlation, and the isotropic-limit checks.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::encoder::{EncoderConfig, ModelLayout};
use crate::error::{Error, Result};
use crate::linalg3::{eigh3, Vec3};
use crate::losses::reduce_to_special_case;
use crate::moldata::{NeighborList, ToyPotential};
use crate::noisegen::{draw_noise, generate, perturb, CovarianceSet, NoiseKey, NoiseMode};
use crate::rng::{self, Purpose};

/// Default probe step, Å.
pub const DEFAULT_PROBE_DELTA: f64 = 0.05;
/// Random step lengths averaged per direction and sign.
pub const PROBE_MAGNITUDES: usize = 8;

/// `2|a − b| / (|a| + |b|)`, zero when both vanish.
pub fn smape(e_ref: f64, e_pert: f64) -> f64 {
    let denom = e_ref.abs() + e_pert.abs();
    if denom == 0.0 {
        0.0
    } else {
        2.0 * (e_ref - e_pert).abs() / denom
    }
}

/// Mean of elementwise [`smape`].
pub fn mean_smape(e_ref: f64, e_pert: &[f64]) -> f64 {
    if e_pert.is_empty() {
        return 0.0;
    }
    e_pert.iter().map(|&e| smape(e_ref, e)).sum::<f64>() / e_pert.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AtomProbe {
    pub atom: usize,
    /// Å², ascending
    pub eigenvalues: [f64; 3],
    /// Unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: [[f64; 3]; 3],
    /// Mean sMAPE of the energy when the atom moves along each eigenvector.
    pub smape: [f64; 3],
    pub nearest_neighbor: Option<usize>,
    /// `|v_min · û|` against the nearest neighbour's bond.
    pub bond_cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenProbeReport {
    pub delta: f64,
    pub magnitudes: usize,
    pub reference_energy: f64,
    pub atoms: Vec<AtomProbe>,
    /// Rank correlation of eigenvalue against sMAPE over all probed directions.
    pub spearman: Option<f64>,
}

/// Moves each atom along each eigenvector of its covariance by `±t`,
/// `t = δ·u` with `u ~ U[0, 1)` drawn [`PROBE_MAGNITUDES`] times, and
/// records the mean sMAPE of the potential energy.
pub fn eigen_probe(
    cov: &CovarianceSet,
    positions: &[Vec3],
    pot: &ToyPotential,
    delta: f64,
    seed: u64,
) -> Result<EigenProbeReport> {
    if cov.len() != positions.len() {
        return Err(Error::DimensionMismatch { what: "probe covariances", expected: positions.len(), found: cov.len() });
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain { op: "probe step", value: delta });
    }
    let e0 = pot.energy(positions);
    let mut atoms = Vec::with_capacity(positions.len());
    for (i, a) in cov.atoms.iter().enumerate() {
        let eig = eigh3(&a.sigma);
        let mut smapes = [0.0; 3];
        for (k, v) in eig.vectors.iter().enumerate() {
            let mut r = rng::stream(seed, Purpose::Probe, &[i as u64, k as u64]);
            let mut energies = Vec::with_capacity(2 * PROBE_MAGNITUDES);
            for _ in 0..PROBE_MAGNITUDES {
                let t = delta * r.random::<f64>();
                for sign in [1.0, -1.0] {
                    let mut x = positions.to_vec();
                    x[i] = x[i] + *v * (sign * t);
                    energies.push(pot.energy(&x));
                }
            }
            smapes[k] = mean_smape(e0, &energies);
        }
        let nearest = (0..positions.len())
            .filter(|&j| j != i)
            .min_by(|&p, &q| {
                let dp = (positions[p] - positions[i]).norm();
                let dq = (positions[q] - positions[i]).norm();
                dp.total_cmp(&dq)
            });
        let bond_cosine = nearest.map(|j| {
            let u = positions[i] - positions[j];
            (eig.vectors[0].dot(&u) / u.norm()).abs()
        });
        atoms.push(AtomProbe {
            atom: i,
            eigenvalues: eig.values,
            eigenvectors: eig.vectors.map(|v| v.to_array()),
            smape: smapes,
            nearest_neighbor: nearest,
            bond_cosine,
        });
    }
    let lambda: Vec<f64> = atoms.iter().flat_map(|a| a.eigenvalues).collect();
    let sens: Vec<f64> = atoms.iter().flat_map(|a| a.smape).collect();
    let spearman = spearman(&lambda, &sens);
    Ok(EigenProbeReport { delta, magnitudes: PROBE_MAGNITUDES, reference_energy: e0, atoms, spearman })
}

/// Ranks starting at 1; values within a relative `1e-9` of each other share
/// their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = alloc::vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() {
            let (a, b) = (x[order[start]], x[order[end]]);
            if (b - a).abs() > 1e-9 * a.abs().max(b.abs()) {
                break;
            }
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            out[k] = rank;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation, `None` when either side has no spread.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / libm::sqrt(sxx * syy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl ReductionCheck {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Runs the isotropic special cases through the generator and the loss and
/// compares them against independently written formulas.
pub fn reduction_suite(seed: u64, sigma: f64) -> Result<Vec<ReductionCheck>> {
    let cfg = EncoderConfig { dim: 8, layers: 1, n_rbf: 4, cutoff: 2.5, max_z: 10 };
    let model = ModelLayout::new(&cfg)?;
    let params = model.init(seed, sigma);
    let mut r = rng::stream(seed, Purpose::Probe, &[u64::MAX]);
    let mut checks = Vec::new();
    let mut worst = [0.0f64; 5];
    for trial in 0..20u64 {
        let n = 3 + (trial % 4) as usize;
        let z: Vec<u32> = (0..n).map(|k| [1, 6, 8][k % 3]).collect();
        let x: Vec<Vec3> = (0..n)
            .map(|k| Vec3::new(1.1 * k as f64, r.random_range(-0.4..0.4), r.random_range(-0.4..0.4)))
            .collect();
        let graph = NeighborList::from_positions(&x, cfg.cutoff)?;
        let mask: Vec<bool> = (0..n).map(|k| k % 2 == 0 || r.random::<bool>()).collect();
        let key = NoiseKey { seed, epoch: 0, frame: trial };
        let pred: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)))
            .collect();

        let dens: CovarianceSet = generate(&model.generator, &params, &z, &x, &graph, NoiseMode::Dens, sigma)?;
        let pert = perturb(&x, &dens, draw_noise(key, &mask), &mask);
        let rep = reduce_to_special_case(NoiseMode::Dens, &pert, &alloc::vec![sigma * sigma; n], &pred)?;
        worst[0] = worst[0].max(rep.target_deviation);
        worst[1] = worst[1].max(rep.loss_deviation);

        let vae: CovarianceSet = generate(&model.generator, &params, &z, &x, &graph, NoiseMode::DenoiseVae, sigma)?;
        let scales: Vec<f64> = vae.atoms.iter().map(|a| a.scale).collect();
        let pert = perturb(&x, &vae, draw_noise(key, &mask), &mask);
        let rep = reduce_to_special_case(NoiseMode::DenoiseVae, &pert, &scales, &pred)?;
        worst[2] = worst[2].max(rep.target_deviation);
        worst[3] = worst[3].max(rep.argmin_gradient);
        let off_diagonal = vae.atoms.iter().map(|a| a.sigma.xy.abs().max(a.sigma.xz.abs()).max(a.sigma.yz.abs()));
        worst[4] = worst[4].max(off_diagonal.fold(0.0, f64::max));
    }
    for (name, value, tolerance) in [
        ("fixed-scale targets equal (X~ - X)/sigma^2", worst[0], 1e-10),
        ("fixed-scale loss equals classical denoising loss", worst[1], 1e-10),
        ("per-atom isotropic targets equal (X~ - X)/sigma_i^2", worst[2], 1e-10),
        ("weighted isotropic loss is stationary at the anisotropic optimum", worst[3], 1e-10),
        ("per-atom isotropic covariances have no off-diagonal terms", worst[4], 0.0),
    ] {
        checks.push(ReductionCheck { name: name.into(), value, tolerance });
    }
    Ok(checks)
}
