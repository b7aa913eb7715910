//! Molecules, neighbour graphs, toy potentials and Boltzmann sampling.

mod langevin;
mod neighbors;
mod potential;

pub use langevin::{sample_boltzmann, LangevinConfig, DIVERGENCE_LIMIT};
pub use neighbors::{build_neighbors, Neighbor, NeighborList, MIN_SEPARATION};
pub use potential::{Bond, PotentialKind, Tether, ToyPotential};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg3::Vec3;

/// Atomic numbers, positions (Å) and optional energy (eV) / force (eV/Å) labels.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Molecule {
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<Vec3>,
    pub forces: Option<Vec<Vec3>>,
    pub energy: Option<f64>,
}

impl Molecule {
    pub fn new(atomic_numbers: Vec<u32>, positions: Vec<Vec3>) -> Result<Self> {
        let mol = Self { atomic_numbers, positions, forces: None, energy: None };
        mol.validate()?;
        Ok(mol)
    }

    pub fn with_labels(mut self, energy: f64, forces: Vec<Vec3>) -> Result<Self> {
        self.energy = Some(energy);
        self.forces = Some(forces);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::InvalidConfig("a molecule needs at least one atom".into()));
        }
        if self.atomic_numbers.len() != n {
            return Err(Error::DimensionMismatch {
                what: "atomic numbers",
                expected: n,
                found: self.atomic_numbers.len(),
            });
        }
        if let Some(f) = &self.forces {
            if f.len() != n {
                return Err(Error::DimensionMismatch { what: "forces", expected: n, found: f.len() });
            }
        }
        if let Some(k) = self.atomic_numbers.iter().position(|&z| z == 0) {
            return Err(Error::InvalidConfig(format!("atom {k} has atomic number 0")));
        }
        Ok(())
    }

    /// Energy and forces, or `MissingLabels`.
    pub fn labels(&self) -> Result<(f64, &[Vec3])> {
        let e = self.energy.ok_or(Error::MissingLabels("energy"))?;
        let f = self.forces.as_deref().ok_or(Error::MissingLabels("force"))?;
        Ok((e, f))
    }
}
