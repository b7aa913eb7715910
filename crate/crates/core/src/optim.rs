//! Adam with decoupled weight decay.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, n_params: usize) -> Self {
        Self { config, step: 0, m: alloc::vec![0.0; n_params], v: alloc::vec![0.0; n_params] }
    }

    /// One update of `params[active]`. Entries outside `active` are left
    /// untouched, moments included. A non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], active: Range<usize>) -> Result<()> {
        let n = self.m.len();
        if params.len() != n || grads.len() != n {
            return Err(Error::DimensionMismatch { what: "optimizer state", expected: n, found: params.len().min(grads.len()) });
        }
        if let Some(index) = grads[active.clone()].iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index: active.start + index });
        }
        let c = self.config;
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(c.beta1, t);
        let bc2 = 1.0 - libm::pow(c.beta2, t);
        for k in active {
            let g = grads[k];
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= c.lr * (m_hat / (libm::sqrt(v_hat) + c.eps) + c.weight_decay * params[k]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = AdamW::new(AdamWConfig::default(), 3);
        let mut p = [1.0, -2.0, 3.0];
        opt.step(&mut p, &[0.0; 3], 0..3).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = AdamW::new(AdamWConfig::default(), 1);
        let mut p = [0.5];
        opt.step(&mut p, &[1.0], 0..1).unwrap();
        assert!((p[0] - (0.5 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut opt = AdamW::new(AdamWConfig::default(), 2);
        let mut p = [0.5, 0.5];
        let err = opt.step(&mut p, &[1.0, f64::NAN], 0..2).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 1 }));
        assert_eq!(p, [0.5, 0.5]);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn inactive_range_is_frozen() {
        let cfg = AdamWConfig { weight_decay: 0.1, ..Default::default() };
        let mut opt = AdamW::new(cfg, 4);
        let mut p = [1.0; 4];
        opt.step(&mut p, &[1.0; 4], 2..4).unwrap();
        assert_eq!(&p[..2], &[1.0, 1.0]);
        assert!(p[2] < 1.0);
    }

    #[test]
    fn quadratic_bowl_descends() {
        // f(p) = Σ c_k p_k², curvatures spread over two decades
        let c = [0.1, 1.0, 10.0];
        let f = |p: &[f64]| p.iter().zip(&c).map(|(x, k)| k * x * x).sum::<f64>();
        let mut opt = AdamW::new(AdamWConfig { lr: 1e-2, ..Default::default() }, 3);
        let mut p = [1.0, -1.0, 0.5];
        let mut prev = f(&p);
        for step in 0..200 {
            let g: Vec<f64> = p.iter().zip(&c).map(|(x, k)| 2.0 * k * x).collect();
            opt.step(&mut p, &g, 0..3).unwrap();
            let cur = f(&p);
            if step >= 10 {
                assert!(cur <= prev, "step {step}: {cur} > {prev}");
            }
            prev = cur;
        }
        assert!(prev < 0.5);
    }
}
