use alloc::vec::Vec;

use crate::linalg3::Vec3;

/// Harmonic spring pinning one atom to an anchor point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tether {
    pub atom: usize,
    /// eV/Å²
    pub k: f64,
    pub anchor: Vec3,
}

/// Harmonic spring on the distance between two atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    /// eV/Å²
    pub k: f64,
    /// rest length, Å
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum PotentialKind {
    Harmonic {
        #[cfg_attr(feature = "serde", serde(default))]
        tethers: Vec<Tether>,
        #[cfg_attr(feature = "serde", serde(default))]
        bonds: Vec<Bond>,
    },
    /// All-pairs 12-6 potential.
    LennardJones { epsilon: f64, sigma: f64 },
}

/// Analytic toy energy surface with exact forces.
///
/// `energy_offset` is added to every energy. It plays the role of the large
/// total energy of a real molecule, which keeps relative energy errors such
/// as sMAPE well defined at the minimum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ToyPotential {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: PotentialKind,
    #[cfg_attr(feature = "serde", serde(default))]
    pub energy_offset: f64,
}

impl ToyPotential {
    pub fn harmonic(tethers: Vec<Tether>, bonds: Vec<Bond>) -> Self {
        Self { kind: PotentialKind::Harmonic { tethers, bonds }, energy_offset: 0.0 }
    }

    pub fn lennard_jones(epsilon: f64, sigma: f64) -> Self {
        Self { kind: PotentialKind::LennardJones { epsilon, sigma }, energy_offset: 0.0 }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.energy_offset = offset;
        self
    }

    pub fn energy(&self, positions: &[Vec3]) -> f64 {
        self.energy_and_forces(positions).0
    }

    pub fn forces(&self, positions: &[Vec3]) -> Vec<Vec3> {
        self.energy_and_forces(positions).1
    }

    pub fn energy_and_forces(&self, positions: &[Vec3]) -> (f64, Vec<Vec3>) {
        let mut forces = alloc::vec![Vec3::zero(); positions.len()];
        let mut energy = self.energy_offset;
        match &self.kind {
            PotentialKind::Harmonic { tethers, bonds } => {
                for t in tethers {
                    let d = positions[t.atom] - t.anchor;
                    energy += 0.5 * t.k * d.norm_squared();
                    forces[t.atom] = forces[t.atom] - d * t.k;
                }
                for b in bonds {
                    let r = positions[b.i] - positions[b.j];
                    let dist = r.norm();
                    let stretch = dist - b.r0;
                    energy += 0.5 * b.k * stretch * stretch;
                    let f = r * (-b.k * stretch / dist);
                    forces[b.i] = forces[b.i] + f;
                    forces[b.j] = forces[b.j] - f;
                }
            }
            PotentialKind::LennardJones { epsilon, sigma } => {
                for i in 0..positions.len() {
                    for j in (i + 1)..positions.len() {
                        let r = positions[i] - positions[j];
                        let d2 = r.norm_squared();
                        let s6 = libm::pow(sigma * sigma / d2, 3.0);
                        energy += 4.0 * epsilon * (s6 * s6 - s6);
                        // -dE/dr / r
                        let scale = 24.0 * epsilon * (2.0 * s6 * s6 - s6) / d2;
                        let f = r * scale;
                        forces[i] = forces[i] + f;
                        forces[j] = forces[j] - f;
                    }
                }
            }
        }
        (energy, forces)
    }

    /// Upper estimate of the largest Hessian eigenvalue, eV/Å².
    pub fn stiffness(&self, n_atoms: usize) -> f64 {
        match &self.kind {
            PotentialKind::Harmonic { tethers, bonds } => {
                let mut per_atom = alloc::vec![0.0; n_atoms];
                for t in tethers {
                    per_atom[t.atom] += t.k;
                }
                for b in bonds {
                    per_atom[b.i] += 2.0 * b.k;
                    per_atom[b.j] += 2.0 * b.k;
                }
                per_atom.into_iter().fold(0.0, f64::max)
            }
            PotentialKind::LennardJones { epsilon, sigma } => {
                // curvature at the pair minimum is 72·2^(-1/3)·ε/σ²
                let pair = 72.0 * libm::pow(2.0, -1.0 / 3.0) * epsilon / (sigma * sigma);
                2.0 * pair * (n_atoms.max(2) - 1) as f64
            }
        }
    }

    /// Smallest spring constant, which sets the slowest relaxation time.
    pub fn softest_mode(&self) -> f64 {
        match &self.kind {
            PotentialKind::Harmonic { tethers, bonds } => tethers
                .iter()
                .map(|t| t.k)
                .chain(bonds.iter().map(|b| 2.0 * b.k))
                .fold(f64::INFINITY, f64::min),
            PotentialKind::LennardJones { epsilon, sigma } => {
                72.0 * libm::pow(2.0, -1.0 / 3.0) * epsilon / (sigma * sigma)
            }
        }
    }

    /// Tether stiffness per atom, for the closed-form Gaussian score.
    pub fn tether_stiffness(&self, n_atoms: usize) -> Vec<f64> {
        let mut k = alloc::vec![0.0; n_atoms];
        if let PotentialKind::Harmonic { tethers, .. } = &self.kind {
            for t in tethers {
                k[t.atom] += t.k;
            }
        }
        k
    }
}
