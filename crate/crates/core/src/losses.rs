//! Training objectives.
//!
//! Every function is generic over [`Real`] so the same code yields values
//! (`f64`) and gradients (tape variables).

use alloc::vec::Vec;

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::linalg3::{invert3, Vec3};
use crate::moldata::Molecule;
use crate::noisegen::{CovarianceSet, PerturbedMolecule};

/// Coefficients of the individual terms in the total loss.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossWeights {
    pub anids: f64,
    pub kl: f64,
    pub gamma: f64,
    pub energy: f64,
    pub force: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { anids: 1.0, kl: 1.0, gamma: 1.0, energy: 1.0, force: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("anids", self.anids),
            ("kl", self.kl),
            ("gamma", self.gamma),
            ("energy", self.energy),
            ("force", self.force),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!("loss weight {name} must be finite and nonnegative, got {w}")));
            }
        }
        Ok(())
    }
}

/// Individual terms and their weighted sum. Terms whose weight is zero are
/// not evaluated and read as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown<T = f64> {
    pub anids: T,
    pub kl: T,
    pub gamma: T,
    pub energy: T,
    pub force: T,
    pub total: T,
}

impl<T: Real> LossBreakdown<T> {
    pub fn zero() -> Self {
        let z = T::zero();
        Self { anids: z, kl: z, gamma: z, energy: z, force: z, total: z }
    }

    /// Fills `total` from the terms.
    pub fn weighted(anids: T, kl: T, gamma: T, energy: T, force: T, w: &LossWeights) -> Self {
        let total = anids * w.anids + kl * w.kl + gamma * w.gamma + energy * w.energy + force * w.force;
        Self { anids, kl, gamma, energy, force, total }
    }

    pub fn value(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            anids: self.anids.value(),
            kl: self.kl.value(),
            gamma: self.gamma.value(),
            energy: self.energy.value(),
            force: self.force.value(),
            total: self.total.value(),
        }
    }
}

impl LossBreakdown<f64> {
    /// Termwise mean.
    pub fn mean(items: &[Self]) -> Self {
        let n = items.len().max(1) as f64;
        let mut m = Self::zero();
        for b in items {
            m.anids += b.anids / n;
            m.kl += b.kl / n;
            m.gamma += b.gamma / n;
            m.energy += b.energy / n;
            m.force += b.force / n;
            m.total += b.total / n;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        [self.anids, self.kl, self.gamma, self.energy, self.force, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `|x|` with zero derivative at the origin.
pub fn abs<T: Real>(x: T) -> T {
    x.relu() + (-x).relu()
}

fn check_cover<T: Real>(pert: &PerturbedMolecule<T>, cov: &CovarianceSet<T>, pred: &[Vec3<T>]) -> Result<usize> {
    let n = pert.mask.len();
    if cov.len() != n || pred.len() != n {
        return Err(Error::DimensionMismatch { what: "denoising inputs", expected: n, found: cov.len().min(pred.len()) });
    }
    match pert.corrupted_count() {
        0 => Err(Error::EmptyMask),
        k => Ok(k),
    }
}

/// `Σ_i⁻¹(X̃_i − X_i)` for every atom (zero where the mask is off).
pub fn anids_targets<T: Real>(pert: &PerturbedMolecule<T>, cov: &CovarianceSet<T>) -> Result<Vec<Vec3<T>>> {
    (0..pert.mask.len())
        .map(|i| {
            if !pert.mask[i] {
                return Ok(Vec3::zero());
            }
            let disp = pert.perturbed[i] - Vec3::lift(pert.original[i]);
            Ok(invert3(&cov.atoms[i].sigma)?.mul_vec(&disp))
        })
        .collect()
}

/// Mean over corrupted atoms of `‖φ_i − Σ_i⁻¹(X̃_i − X_i)‖²`.
pub fn anids_loss<T: Real>(pert: &PerturbedMolecule<T>, cov: &CovarianceSet<T>, pred: &[Vec3<T>]) -> Result<T> {
    let k = check_cover(pert, cov, pred)?;
    let targets = anids_targets(pert, cov)?;
    let terms: Vec<T> = (0..pred.len())
        .filter(|&i| pert.mask[i])
        .map(|i| (pred[i] - targets[i]).norm_squared())
        .collect();
    Ok(T::sum(&terms) / k as f64)
}

/// Same value as [`anids_loss`] with the target taken as `L_i⁻ᵀ ε_i`.
pub fn anids_loss_from_noise<T: Real>(pert: &PerturbedMolecule<T>, cov: &CovarianceSet<T>, pred: &[Vec3<T>]) -> Result<T> {
    let k = check_cover(pert, cov, pred)?;
    let terms: Vec<T> = (0..pred.len())
        .filter(|&i| pert.mask[i])
        .map(|i| {
            let target = cov.atoms[i].chol.solve_transpose(&Vec3::lift(pert.noise[i]));
            (pred[i] - target).norm_squared()
        })
        .collect();
    Ok(T::sum(&terms) / k as f64)
}

/// Mean over atoms of `KL(N(0, Σ_i) ‖ N(0, σ_p² I))`.
pub fn kl_loss<T: Real>(cov: &CovarianceSet<T>, sigma_p: f64) -> Result<T> {
    if !(sigma_p > 0.0) {
        return Err(Error::Domain { op: "prior scale", value: sigma_p });
    }
    if cov.is_empty() {
        return Ok(T::zero());
    }
    let var_p = sigma_p * sigma_p;
    let log_det_p = 3.0 * libm::log(var_p);
    let terms: Vec<T> = cov
        .atoms
        .iter()
        .map(|a| {
            let [d1, d2, d3] = a.chol.diagonal();
            let log_det = (d1.ln() + d2.ln() + d3.ln()) * 2.0;
            (a.sigma.trace() / var_p - 3.0 + (-log_det + log_det_p)) * 0.5
        })
        .collect();
    Ok(T::sum(&terms) / cov.len() as f64)
}

/// `(1/N) Σ_i max(0, κ − Γ_i)²`
pub fn gamma_hinge<T: Real>(gamma_mass: &[T], kappa: f64) -> T {
    if gamma_mass.is_empty() {
        return T::zero();
    }
    let terms: Vec<T> = gamma_mass.iter().map(|&g| (-g + kappa).relu().pow2()).collect();
    T::sum(&terms) / gamma_mass.len() as f64
}

/// `(|E − Ê|, mean over atoms with mask off of ‖f_i − f̂_i‖²)`.
///
/// With every atom masked the force term is zero.
pub fn supervised_losses<T: Real>(mol: &Molecule, energy: T, forces: &[Vec3<T>], mask: &[bool]) -> Result<(T, T)> {
    let (e_ref, f_ref) = mol.labels()?;
    let n = mol.len();
    if forces.len() != n || mask.len() != n {
        return Err(Error::DimensionMismatch { what: "force predictions", expected: n, found: forces.len().min(mask.len()) });
    }
    let l_e = abs(energy - e_ref);
    let terms: Vec<T> = (0..n)
        .filter(|&i| !mask[i])
        .map(|i| (forces[i] - Vec3::lift(f_ref[i])).norm_squared())
        .collect();
    let count = terms.len().max(1) as f64;
    Ok((l_e, T::sum(&terms) / count))
}

/// Outcome of comparing the anisotropic objective with its isotropic special cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionReport {
    /// Largest `|Σ_i⁻¹(X̃_i − X_i) − (X̃_i − X_i)/σ_i²|` component.
    pub target_deviation: f64,
    /// `|anids_loss − reference|`, where the reference is the fixed-scale
    /// denoising loss for `Dens` and the `σ_i²`-weighted form for `DenoiseVae`.
    pub loss_deviation: f64,
    /// Largest gradient component of the weighted form at the AniDS optimum.
    pub argmin_gradient: f64,
}

/// Checks that the AniDS objective collapses to the isotropic ones when
/// `γ ≡ 0` (per-atom `σ_i²`) or additionally `σ_i ≡ σ`.
///
/// `scales` holds `σ_i²` per atom. `pred` is an arbitrary prediction used for
/// the value comparison.
pub fn reduce_to_special_case(
    mode: crate::noisegen::NoiseMode,
    pert: &PerturbedMolecule<f64>,
    scales: &[f64],
    pred: &[Vec3],
) -> Result<ReductionReport> {
    use crate::noisegen::NoiseMode;
    if mode == NoiseMode::Anids {
        return Err(Error::InvalidConfig("reduction applies to the isotropic modes only".into()));
    }
    let n = pert.mask.len();
    if scales.len() != n || pred.len() != n {
        return Err(Error::DimensionMismatch { what: "reduction inputs", expected: n, found: scales.len().min(pred.len()) });
    }
    if mode == NoiseMode::Dens && scales.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidConfig("fixed-scale mode needs a single shared variance".into()));
    }
    let cov = CovarianceSet::isotropic(scales)?;
    let targets = anids_targets(pert, &cov)?;
    let corrupted: Vec<usize> = (0..n).filter(|&i| pert.mask[i]).collect();
    if corrupted.is_empty() {
        return Err(Error::EmptyMask);
    }

    let mut target_deviation: f64 = 0.0;
    let mut plain = 0.0;
    let mut weighted = 0.0;
    let mut argmin_gradient: f64 = 0.0;
    for &i in &corrupted {
        let s2 = scales[i];
        let classical = (pert.perturbed[i] - pert.original[i]) * (1.0 / s2);
        target_deviation = target_deviation.max((targets[i] - classical).max_abs());
        let r = pred[i] - classical;
        plain += r.norm_squared();
        weighted += s2 * r.norm_squared();
        // d/dφ of σ²‖φ − t‖² evaluated at φ = Σ⁻¹(X̃ − X)
        argmin_gradient = argmin_gradient.max(((targets[i] - classical) * (2.0 * s2)).max_abs());
    }
    let k = corrupted.len() as f64;
    let reference = match mode {
        NoiseMode::Dens => plain / k,
        _ => weighted / k,
    };
    let value = anids_loss(pert, &cov, pred)?;
    let loss_deviation = match mode {
        NoiseMode::Dens => (value - reference).abs(),
        // the weighted form differs in value by per-atom factors; only its minimiser is compared
        _ => 0.0,
    };
    Ok(ReductionReport { target_deviation, loss_deviation, argmin_gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::linalg3::SymMat3;
    use crate::noisegen::{anisotropic_weights, build_covariance, perturb, AtomCovariance, NoiseMode};
    use alloc::vec;

    fn one_atom(sigma: SymMat3, noise: Vec3) -> (PerturbedMolecule, CovarianceSet) {
        let chol = crate::linalg3::cholesky3(&sigma).unwrap();
        let cov = CovarianceSet {
            atoms: vec![AtomCovariance { sigma, chol, scale: sigma.xx, gamma_mass: 0.0, weights: vec![] }],
        };
        let pert = perturb(&[Vec3::zero()], &cov, vec![noise], &[true]);
        (pert, cov)
    }

    #[test]
    fn isotropic_arithmetic() {
        // L = 0.1 I, ε = (1,0,0) gives X̃ − X = (0.1, 0, 0)
        let (pert, cov) = one_atom(SymMat3::scalar(0.01), Vec3::new(1.0, 0.0, 0.0));
        let l = anids_loss(&pert, &cov, &[Vec3::zero()]).unwrap();
        assert!((l - 100.0).abs() < 1e-10);
        let t = anids_targets(&pert, &cov).unwrap();
        assert_eq!(anids_loss(&pert, &cov, &t).unwrap(), 0.0);
    }

    #[test]
    fn noise_route_matches_inverse_route() {
        let units = [Vec3::new(0.0, 0.6, 0.8), Vec3::new(1.0, 0.0, 0.0)];
        let (g, _) = anisotropic_weights(&[0.4, -0.1], 0.5).unwrap();
        let sigma = build_covariance(0.03, &g, &units);
        let (pert, cov) = one_atom(sigma, Vec3::new(-0.7, 1.2, 0.3));
        let pred = [Vec3::new(3.0, -2.0, 10.0)];
        let a = anids_loss(&pert, &cov, &pred).unwrap();
        let b = anids_loss_from_noise(&pert, &cov, &pred).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs());
    }

    #[test]
    fn empty_mask_is_an_error() {
        let cov = CovarianceSet::isotropic(&[0.01]).unwrap();
        let pert = perturb(&[Vec3::zero()], &cov, vec![Vec3::zero()], &[false]);
        assert!(matches!(anids_loss(&pert, &cov, &[Vec3::zero()]), Err(Error::EmptyMask)));
    }

    #[test]
    fn kl_closed_forms() {
        let sp = 0.1;
        let prior = CovarianceSet::isotropic(&[sp * sp; 4]).unwrap();
        assert!(kl_loss(&prior, sp).unwrap().abs() < 1e-14);
        let doubled = CovarianceSet::isotropic(&[2.0 * sp * sp]).unwrap();
        let expect = (3.0 - 3.0 * core::f64::consts::LN_2) / 2.0;
        assert!((kl_loss(&doubled, sp).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn kl_gradient_vanishes_at_prior() {
        let tape = Tape::new();
        let log_a = tape.var(libm::log(0.01));
        let cov = CovarianceSet::<crate::Var> {
            atoms: vec![{
                let a = log_a.exp();
                let sigma = SymMat3::scalar(a);
                AtomCovariance { chol: crate::linalg3::cholesky3(&sigma).unwrap(), sigma, scale: a, gamma_mass: a * 0.0, weights: vec![] }
            }],
        };
        let kl = kl_loss(&cov, 0.1).unwrap();
        let g = tape.backward(kl).wrt(log_a);
        assert!(g.abs() < 1e-8, "{g}");
    }

    #[test]
    fn hinge_values_and_gradient() {
        assert_eq!(gamma_hinge(&[0.8], 0.5), 0.0);
        assert!((gamma_hinge(&[0.2], 0.5) - 0.09).abs() < 1e-15);
        assert_eq!(gamma_hinge(&[0.0, 0.3], 0.0), 0.0);
        let tape = Tape::new();
        let g = tape.var(0.2);
        let h = gamma_hinge(&[g], 0.5);
        assert!((tape.backward(h).wrt(g) + 0.6).abs() < 1e-14);
    }

    #[test]
    fn supervised_terms() {
        let mol = Molecule::new(vec![1, 1, 8], vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)])
            .unwrap()
            .with_labels(-2.0, vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, 0.0, -1.0)])
            .unwrap();
        let (_, f) = mol.labels().unwrap();
        let exact = supervised_losses(&mol, -2.0, f, &[false; 3]).unwrap();
        assert_eq!(exact, (0.0, 0.0));
        let pred = vec![Vec3::zero(); 3];
        let (e, l) = supervised_losses(&mol, -1.5, &pred, &[true, false, false]).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        assert!((l - 2.5).abs() < 1e-15);
        let (_, l) = supervised_losses(&mol, -1.5, &pred, &[true; 3]).unwrap();
        assert_eq!(l, 0.0);
        let unlabelled = Molecule::new(vec![1], vec![Vec3::zero()]).unwrap();
        assert!(matches!(supervised_losses(&unlabelled, 0.0, &[Vec3::zero()], &[false]), Err(Error::MissingLabels(_))));
    }

    #[test]
    fn breakdown_total_is_weighted_sum() {
        let w = LossWeights { anids: 0.5, kl: 2.0, gamma: 3.0, energy: 0.0, force: 7.0 };
        let b = LossBreakdown::weighted(1.0, 0.25, 0.1, 9.0, 0.5, &w);
        assert!((b.total - (0.5 + 0.5 + 0.3 + 3.5)).abs() < 1e-12);
    }

    #[test]
    fn isotropic_special_cases() {
        let x = vec![Vec3::zero(), Vec3::new(1.2, 0.0, 0.0)];
        let scales = [0.01, 0.01];
        let cov = CovarianceSet::isotropic(&scales).unwrap();
        let pert = perturb(&x, &cov, vec![Vec3::new(0.3, -1.0, 2.0), Vec3::new(-0.5, 0.1, 0.9)], &[true, true]);
        let pred = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-4.0, 0.0, 1.0)];
        let r = reduce_to_special_case(NoiseMode::Dens, &pert, &scales, &pred).unwrap();
        assert!(r.target_deviation < 1e-10 && r.loss_deviation < 1e-10 && r.argmin_gradient < 1e-10);

        let scales = [0.004, 0.02];
        let cov = CovarianceSet::isotropic(&scales).unwrap();
        let pert = perturb(&x, &cov, vec![Vec3::new(0.3, -1.0, 2.0), Vec3::new(-0.5, 0.1, 0.9)], &[true, true]);
        let r = reduce_to_special_case(NoiseMode::DenoiseVae, &pert, &scales, &pred).unwrap();
        assert!(r.target_deviation < 1e-10 && r.argmin_gradient < 1e-10);
        assert!(reduce_to_special_case(NoiseMode::Dens, &pert, &scales, &pred).is_err());
    }

    #[test]
    fn small_gamma_approaches_isotropic_loss() {
        let u = [Vec3::new(0.0, 0.0, 1.0)];
        let eps = Vec3::new(0.2, 0.4, -1.1);
        let pred = [Vec3::new(1.0, 1.0, 1.0)];
        let (p0, c0) = one_atom(SymMat3::scalar(0.01), eps);
        let iso = anids_loss(&p0, &c0, &pred).unwrap();
        let mut prev = f64::INFINITY;
        for g in [1e-2, 1e-4, 1e-6] {
            let (p, c) = one_atom(build_covariance(0.01, &[g], &u), eps);
            let d = (anids_loss(&p, &c, &pred).unwrap() - iso).abs();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-3);
    }
}
