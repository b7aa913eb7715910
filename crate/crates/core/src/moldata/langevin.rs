use alloc::vec::Vec;

use super::{Molecule, ToyPotential};
use crate::error::{Error, Result};
use crate::linalg3::Vec3;
use crate::rng::{self, Purpose};

/// Coordinates beyond this magnitude (Å) abort sampling.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

/// Euler–Maruyama settings for overdamped Langevin dynamics with unit mobility.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LangevinConfig {
    /// Time step in units where the relaxation time of a spring of stiffness k is 1/k.
    pub dt: f64,
    /// Integration steps between recorded frames.
    pub stride: usize,
    /// Steps discarded before the first frame.
    pub burn_in: usize,
}

impl LangevinConfig {
    /// `dt = 0.01 / stiffness`, one relaxation time of the softest mode
    /// between frames, and a burn-in of ten relaxation times.
    pub fn for_potential(pot: &ToyPotential, n_atoms: usize) -> Self {
        let stiff = pot.stiffness(n_atoms).max(f64::MIN_POSITIVE);
        let dt = 0.01 / stiff;
        let tau = 1.0 / pot.softest_mode().clamp(f64::MIN_POSITIVE, stiff);
        let stride = libm::ceil(tau / dt).max(1.0) as usize;
        Self { dt, stride, burn_in: 10 * stride }
    }
}

/// Draws `n_frames` structures from `exp(−E/kT)` starting at `start`.
///
/// Each frame carries the exact energy and forces of `pot`. The trajectory is
/// a pure function of `seed`.
pub fn sample_boltzmann(
    pot: &ToyPotential,
    start: &Molecule,
    n_frames: usize,
    kt: f64,
    seed: u64,
    cfg: &LangevinConfig,
) -> Result<Vec<Molecule>> {
    if !(kt > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("temperature must be positive, got {kt}")));
    }
    if !(cfg.dt > 0.0) || cfg.stride == 0 {
        return Err(Error::InvalidConfig("langevin dt must be positive and stride nonzero".into()));
    }
    start.validate()?;
    let mut x = start.positions.clone();
    let (_, mut forces) = pot.energy_and_forces(&x);
    if forces.iter().any(|f| !f.is_finite()) {
        return Err(Error::Diverged { step: 0, atom: 0 });
    }

    let mut rng = rng::stream(seed, Purpose::Langevin, &[]);
    let kick = libm::sqrt(2.0 * kt * cfg.dt);
    let mut step: u64 = 0;
    let mut advance = |x: &mut Vec<Vec3>, forces: &mut Vec<Vec3>, n: usize| -> Result<()> {
        for _ in 0..n {
            step += 1;
            for (i, (xi, fi)) in x.iter_mut().zip(forces.iter()).enumerate() {
                *xi = *xi + *fi * cfg.dt + rng::standard_normal3(&mut rng) * kick;
                if !(xi.max_abs() <= DIVERGENCE_LIMIT) {
                    return Err(Error::Diverged { step, atom: i });
                }
            }
            *forces = pot.forces(x);
        }
        Ok(())
    };

    advance(&mut x, &mut forces, cfg.burn_in)?;
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        advance(&mut x, &mut forces, cfg.stride)?;
        let (energy, f) = pot.energy_and_forces(&x);
        frames.push(Molecule {
            atomic_numbers: start.atomic_numbers.clone(),
            positions: x.clone(),
            forces: Some(f),
            energy: Some(energy),
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moldata::{Bond, Tether};
    use alloc::vec;

    fn well(k: f64) -> (ToyPotential, Molecule) {
        let pot = ToyPotential::harmonic(vec![Tether { atom: 0, k, anchor: Vec3::zero() }], vec![]);
        let mol = Molecule::new(vec![1], vec![Vec3::zero()]).unwrap();
        (pot, mol)
    }

    #[test]
    fn equipartition_in_a_harmonic_well() {
        let (pot, mol) = well(1.0);
        let cfg = LangevinConfig::for_potential(&pot, 1);
        let kt = 0.1;
        let frames = sample_boltzmann(&pot, &mol, 20_000, kt, 5, &cfg).unwrap();
        let n = frames.len() as f64;
        let mut var = [0.0; 3];
        for f in &frames {
            let p = f.positions[0].to_array();
            for a in 0..3 {
                var[a] += p[a] * p[a] / n;
            }
        }
        for v in var {
            assert!((v - kt / 1.0).abs() <= 0.05 * kt, "variance {v}");
        }
    }

    #[test]
    fn zero_temperature_limit_stays_at_minimum() {
        let (pot, mut mol) = well(2.0);
        mol.positions[0] = Vec3::new(0.3, -0.2, 0.1);
        let cfg = LangevinConfig::for_potential(&pot, 1);
        let frames = sample_boltzmann(&pot, &mol, 10, 1e-12, 1, &cfg).unwrap();
        for f in frames {
            assert!(f.positions[0].max_abs() < 1e-4);
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let pot = ToyPotential::harmonic(vec![], vec![Bond { i: 0, j: 1, k: 10.0, r0: 1.0 }]);
        let mol = Molecule::new(vec![1, 1], vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        let cfg = LangevinConfig::for_potential(&pot, 2);
        let a = sample_boltzmann(&pot, &mol, 50, 0.1, 9, &cfg).unwrap();
        let b = sample_boltzmann(&pot, &mol, 50, 0.1, 9, &cfg).unwrap();
        assert_eq!(a, b);
        let c = sample_boltzmann(&pot, &mol, 50, 0.1, 10, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn oversized_step_diverges() {
        let (pot, mut mol) = well(1.0);
        mol.positions[0] = Vec3::new(1.0, 0.0, 0.0);
        let cfg = LangevinConfig { dt: 3.0, stride: 1, burn_in: 0 };
        let err = sample_boltzmann(&pot, &mol, 100, 0.1, 1, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn rejects_nonpositive_temperature() {
        let (pot, mol) = well(1.0);
        let cfg = LangevinConfig::for_potential(&pot, 1);
        assert!(sample_boltzmann(&pot, &mol, 1, 0.0, 1, &cfg).is_err());
    }
}
