//! Reference densities and scores: a Gaussian mixture centred on known
//! structures, and the Boltzmann score of an analytic potential.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg3::{cholesky3, LowerTri3, SymMat3, Vec3};
use crate::moldata::ToyPotential;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One mixture component: centre and per-atom covariance.
#[derive(Debug, Clone)]
pub struct Component {
    pub center: Vec<Vec3>,
    pub sigma: Vec<SymMat3>,
    chol: Vec<LowerTri3>,
}

impl Component {
    pub fn new(center: Vec<Vec3>, sigma: Vec<SymMat3>) -> Result<Self> {
        if center.len() != sigma.len() {
            return Err(Error::DimensionMismatch { what: "component covariances", expected: center.len(), found: sigma.len() });
        }
        let chol = sigma.iter().map(cholesky3).collect::<Result<_>>()?;
        Ok(Self { center, sigma, chol })
    }

    fn log_density(&self, x: &[Vec3]) -> f64 {
        self.center
            .iter()
            .zip(&self.chol)
            .zip(x)
            .map(|((c, l), xi)| {
                let z = l.solve(&(*xi - *c));
                let [a, b, d] = l.diagonal();
                -0.5 * z.norm_squared() - libm::log(a * b * d) - 1.5 * LN_2PI
            })
            .sum()
    }

    /// `−Σ_i⁻¹(X̃_i − X_i)`
    fn score(&self, x: &[Vec3]) -> Vec<Vec3> {
        self.center
            .iter()
            .zip(&self.chol)
            .zip(x)
            .map(|((c, l), xi)| -l.solve_transpose(&l.solve(&(*xi - *c))))
            .collect()
    }
}

/// Equal-weight mixture of per-atom factorised Gaussians.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    pub components: Vec<Component>,
}

impl MixtureModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let n = components.first().map(|c| c.center.len()).ok_or(Error::EmptyBatch)?;
        if let Some(c) = components.iter().find(|c| c.center.len() != n) {
            return Err(Error::DimensionMismatch { what: "component atoms", expected: n, found: c.center.len() });
        }
        Ok(Self { components })
    }

    /// The same covariances centred on every structure.
    pub fn shared(centers: Vec<Vec<Vec3>>, sigma: &[SymMat3]) -> Result<Self> {
        Self::new(centers.into_iter().map(|c| Component::new(c, sigma.to_vec())).collect::<Result<_>>()?)
    }

    pub fn n_atoms(&self) -> usize {
        self.components[0].center.len()
    }

    fn check(&self, x: &[Vec3]) -> Result<()> {
        if x.len() != self.n_atoms() {
            return Err(Error::DimensionMismatch { what: "query atoms", expected: self.n_atoms(), found: x.len() });
        }
        Ok(())
    }

    fn component_logs(&self, x: &[Vec3]) -> Vec<f64> {
        self.components.iter().map(|c| c.log_density(x)).collect()
    }

    /// Posterior responsibilities `w_k(X̃)`.
    pub fn responsibilities(&self, x: &[Vec3]) -> Result<Vec<f64>> {
        self.check(x)?;
        let logs = self.component_logs(x);
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| libm::exp(l - m)).collect();
        let s: f64 = w.iter().sum();
        Ok(w.into_iter().map(|v| v / s).collect())
    }
}

pub fn mixture_log_density(model: &MixtureModel, x: &[Vec3]) -> Result<f64> {
    model.check(x)?;
    let logs = model.component_logs(x);
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| libm::exp(l - m)).sum();
    Ok(m + libm::log(s) - libm::log(logs.len() as f64))
}

/// Responsibility-weighted sum of component scores.
pub fn mixture_score(model: &MixtureModel, x: &[Vec3]) -> Result<Vec<Vec3>> {
    let w = model.responsibilities(x)?;
    let mut out = alloc::vec![Vec3::zero(); x.len()];
    for (c, wk) in model.components.iter().zip(w) {
        for (o, s) in out.iter_mut().zip(c.score(x)) {
            *o = *o + s * wk;
        }
    }
    Ok(out)
}

/// Score of the single most responsible component.
pub fn nearest_component_approx(model: &MixtureModel, x: &[Vec3]) -> Result<Vec<Vec3>> {
    let w = model.responsibilities(x)?;
    let best = w
        .iter()
        .enumerate()
        .fold(0, |b, (k, v)| if *v > w[b] { k } else { b });
    Ok(model.components[best].score(x))
}

/// `k_B T` in eV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureContext {
    pub kt: f64,
}

impl TemperatureContext {
    pub fn new(kt: f64) -> Result<Self> {
        if !(kt > 0.0 && kt.is_finite()) {
            return Err(Error::Domain { op: "temperature", value: kt });
        }
        Ok(Self { kt })
    }
}

/// `∇ ln p = F / k_B T`
pub fn boltzmann_score(pot: &ToyPotential, tc: TemperatureContext, x: &[Vec3]) -> Vec<Vec3> {
    pot.forces(x).into_iter().map(|f| f * (1.0 / tc.kt)).collect()
}
