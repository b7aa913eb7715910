//! Per-atom covariance construction and anisotropic perturbation.
//!
//! `Σ_i = a_i (I − Σ_j γ_ij û_ij ⊗ û_ij)` with
//! `γ_ij = exp(b_ij) / (Σ_l exp(b_il) + c_i)`. Because `c_i > 0` the
//! anisotropic mass `Γ_i = Σ_j γ_ij` stays below one, so every eigenvalue of
//! `Σ_i` is at least `a_i (1 − Γ_i) > 0`.

use alloc::vec::Vec;

use crate::autodiff::Real;
use crate::encoder::{encode, heads, Encoded, GeneratorLayout, HeadOutputs};
use crate::error::{Error, Result};
use crate::linalg3::{cholesky3, LowerTri3, Mat3, SymMat3, Vec3};
use crate::moldata::NeighborList;
use crate::rng::{self, Purpose};

/// Which family of noise distributions the generator is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NoiseMode {
    /// Full anisotropic covariance.
    #[default]
    Anids,
    /// Learned per-atom isotropic covariance `a_i I` (γ ≡ 0).
    DenoiseVae,
    /// Fixed shared isotropic covariance `σ² I`; the generator is not used.
    Dens,
}

impl NoiseMode {
    pub fn uses_generator(self) -> bool {
        !matches!(self, NoiseMode::Dens)
    }
}

#[derive(Debug, Clone)]
pub struct AtomCovariance<T = f64> {
    pub sigma: SymMat3<T>,
    pub chol: LowerTri3<T>,
    /// `a_i`, Å²
    pub scale: T,
    /// `Γ_i = Σ_j γ_ij`
    pub gamma_mass: T,
    /// `γ_ij` in neighbour-list order.
    pub weights: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct CovarianceSet<T = f64> {
    pub atoms: Vec<AtomCovariance<T>>,
}

impl<T: Real> CovarianceSet<T> {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn gamma_masses(&self) -> Vec<T> {
        self.atoms.iter().map(|a| a.gamma_mass).collect()
    }

    pub fn value(&self) -> CovarianceSet<f64> {
        CovarianceSet {
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomCovariance {
                    sigma: a.sigma.value(),
                    chol: a.chol.value(),
                    scale: a.scale.value(),
                    gamma_mass: a.gamma_mass.value(),
                    weights: a.weights.iter().map(|w| w.value()).collect(),
                })
                .collect(),
        }
    }
}

impl CovarianceSet<f64> {
    /// Isotropic `a_i I` for each atom.
    pub fn isotropic(scales: &[f64]) -> Result<Self> {
        let atoms = scales
            .iter()
            .map(|&a| atom_covariance(a, &[], &[]))
            .collect::<Result<_>>()?;
        Ok(Self { atoms })
    }
}

/// `(γ_ij, Γ_i)` from edge logits `b_i·` and the regulator `c_i > 0`.
pub fn anisotropic_weights<T: Real>(b: &[T], c: T) -> Result<(Vec<T>, T)> {
    Ok(anisotropic_weights_from_logits(b, c.checked_ln()?))
}

/// As [`anisotropic_weights`] with `ln c_i` given directly.
///
/// All logits, including `ln c_i`, are shifted by their maximum before
/// exponentiation. The shift is a constant, so values and derivatives are
/// those of the unshifted expression.
pub fn anisotropic_weights_from_logits<T: Real>(b: &[T], log_c: T) -> (Vec<T>, T) {
    if b.is_empty() {
        return (Vec::new(), T::zero());
    }
    let shift = b.iter().fold(log_c.value(), |m, x| m.max(x.value()));
    let e: Vec<T> = b.iter().map(|&x| (x - shift).exp()).collect();
    let sum = T::sum(&e);
    let denom = sum + (log_c - shift).exp();
    let gamma: Vec<T> = e.iter().map(|&x| x / denom).collect();
    let mass = sum / denom;
    (gamma, mass)
}

/// `a (I − Σ_j γ_j u_j ⊗ u_j)`
pub fn build_covariance<T: Real>(a: T, gamma: &[T], units: &[Vec3<T>]) -> SymMat3<T> {
    debug_assert_eq!(gamma.len(), units.len());
    let mut m = SymMat3::identity();
    for (&g, u) in gamma.iter().zip(units) {
        m = m - SymMat3::outer(u).scale(g);
    }
    m.scale(a)
}

fn atom_covariance<T: Real>(a: T, gamma: &[T], units: &[Vec3<T>]) -> Result<AtomCovariance<T>> {
    let sigma = build_covariance(a, gamma, units);
    let chol = cholesky3(&sigma)?;
    Ok(AtomCovariance { sigma, chol, scale: a, gamma_mass: T::sum(gamma), weights: gamma.to_vec() })
}

/// Assembles covariances from encoder output and head values.
pub fn covariances_from_heads<T: Real>(
    enc: &Encoded<T>,
    head: &HeadOutputs<T>,
    mode: NoiseMode,
) -> Result<CovarianceSet<T>> {
    let n = enc.h.len();
    let mut atoms = Vec::with_capacity(n);
    for i in 0..n {
        let a = head.a(i);
        let cov = match mode {
            NoiseMode::Anids => {
                let range = enc.edge_start[i]..enc.edge_start[i + 1];
                let (gamma, mass) = anisotropic_weights_from_logits(&head.edge_logits[range], head.log_regulator[i]);
                let units: Vec<Vec3<T>> = enc.edges_of(i).iter().map(|e| e.unit).collect();
                let sigma = build_covariance(a, &gamma, &units);
                let chol = cholesky3(&sigma)?;
                AtomCovariance { sigma, chol, scale: a, gamma_mass: mass, weights: gamma }
            }
            NoiseMode::DenoiseVae | NoiseMode::Dens => atom_covariance(a, &[], &[])?,
        };
        atoms.push(cov);
    }
    Ok(CovarianceSet { atoms })
}

/// Runs the generator ψ on a clean structure.
///
/// In `Dens` mode no parameters are touched and every atom gets `dens_sigma² I`.
pub fn generate<T: Real>(
    layout: &GeneratorLayout,
    params: &[T],
    atomic_numbers: &[u32],
    positions: &[Vec3],
    graph: &NeighborList,
    mode: NoiseMode,
    dens_sigma: f64,
) -> Result<CovarianceSet<T>> {
    if mode == NoiseMode::Dens {
        let a = T::constant(dens_sigma * dens_sigma);
        let atoms = (0..positions.len()).map(|_| atom_covariance(a, &[], &[])).collect::<Result<_>>()?;
        return Ok(CovarianceSet { atoms });
    }
    let x: Vec<Vec3<T>> = positions.iter().map(|&p| Vec3::lift(p)).collect();
    let enc = encode(&layout.encoder, params, atomic_numbers, &x, graph, None)?;
    let head = heads(layout, params, &enc, mode == NoiseMode::Anids);
    covariances_from_heads(&enc, &head, mode)
}

/// Key of the per-atom noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseKey {
    pub seed: u64,
    pub epoch: u64,
    pub frame: u64,
}

/// `ε_i ~ N(0, I)` for masked-in atoms, zero elsewhere. Atom `i` draws from its own stream.
pub fn draw_noise(key: NoiseKey, mask: &[bool]) -> Vec<Vec3> {
    mask.iter()
        .enumerate()
        .map(|(i, &m)| {
            if m {
                let mut r = rng::stream(key.seed, Purpose::Noise, &[key.epoch, key.frame, i as u64]);
                rng::standard_normal3(&mut r)
            } else {
                Vec3::zero()
            }
        })
        .collect()
}

/// Clean and perturbed coordinates together with the noise that produced them.
#[derive(Debug, Clone)]
pub struct PerturbedMolecule<T = f64> {
    pub original: Vec<Vec3>,
    pub perturbed: Vec<Vec3<T>>,
    pub noise: Vec<Vec3>,
    pub mask: Vec<bool>,
}

impl<T: Real> PerturbedMolecule<T> {
    pub fn corrupted_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn perturbed_values(&self) -> Vec<Vec3> {
        self.perturbed.iter().map(Vec3::value).collect()
    }
}

/// `X̃_i = X_i + L_i ε_i` on masked-in atoms; the rest are copied.
pub fn perturb<T: Real>(positions: &[Vec3], cov: &CovarianceSet<T>, noise: Vec<Vec3>, mask: &[bool]) -> PerturbedMolecule<T> {
    let perturbed = positions
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = Vec3::<T>::lift(x);
            if mask[i] {
                x + cov.atoms[i].chol.mul_vec(&Vec3::lift(noise[i]))
            } else {
                x
            }
        })
        .collect();
    PerturbedMolecule { original: positions.to_vec(), perturbed, noise, mask: mask.to_vec() }
}

pub fn sample_perturbation(
    positions: &[Vec3],
    cov: &CovarianceSet<f64>,
    mask: &[bool],
    key: NoiseKey,
) -> Result<PerturbedMolecule<f64>> {
    if cov.len() != positions.len() || mask.len() != positions.len() {
        return Err(Error::DimensionMismatch { what: "perturbation inputs", expected: positions.len(), found: cov.len().min(mask.len()) });
    }
    Ok(perturb(positions, cov, draw_noise(key, mask), mask))
}

/// `max_i ‖Σ_i(R X + t) − R Σ_i(X) Rᵀ‖_∞` for the anisotropic generator.
pub fn equivariance_probe(
    layout: &GeneratorLayout,
    params: &[f64],
    atomic_numbers: &[u32],
    positions: &[Vec3],
    cutoff: f64,
    rotation: &Mat3,
    translation: Vec3,
) -> Result<f64> {
    let graph = NeighborList::from_positions(positions, cutoff)?;
    let base = generate(layout, params, atomic_numbers, positions, &graph, NoiseMode::Anids, 0.0)?;
    let moved: Vec<Vec3> = positions.iter().map(|p| rotation.mul_vec(p) + translation).collect();
    let graph = NeighborList::from_positions(&moved, cutoff)?;
    let out = generate(layout, params, atomic_numbers, &moved, &graph, NoiseMode::Anids, 0.0)?;
    Ok(base
        .atoms
        .iter()
        .zip(&out.atoms)
        .map(|(b, o)| (o.sigma - b.sigma.rotate(rotation)).max_abs())
        .fold(0.0, f64::max))
}
