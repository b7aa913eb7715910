use anids_core::linalg3::{cholesky3, Vec3};
use anids_core::losses::{gamma_hinge, kl_loss};
use anids_core::noisegen::{anisotropic_weights_from_logits, build_covariance, AtomCovariance, CovarianceSet};
use anids_core::optim::{AdamW, AdamWConfig};
use anids_core::{Real, Tape, Var};

const SIGMA_P: f64 = 0.1;
const KAPPA: f64 = 0.5;

/// Root of `½[1/(1−Γ) − 3/(3−Γ)] = 2λ(κ − Γ)` by bisection.
fn closed_form_gamma(lambda: f64) -> f64 {
    let f = |g: f64| 0.5 * (1.0 / (1.0 - g) - 3.0 / (3.0 - g)) - 2.0 * lambda * (KAPPA - g);
    let (mut lo, mut hi) = (0.0, KAPPA);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn objective<T: Real>(p: &[T], lambda: f64) -> (T, f64, f64) {
    let u = Vec3::new(T::constant(0.0), T::constant(0.6), T::constant(0.8));
    let a = p[0].exp();
    let (gamma, mass) = anisotropic_weights_from_logits(&p[1..2], p[2]);
    let sigma = build_covariance(a, &gamma, &[u]);
    let chol = cholesky3(&sigma).unwrap();
    let cov = CovarianceSet { atoms: vec![AtomCovariance { sigma, chol, scale: a, gamma_mass: mass, weights: gamma }] };
    let loss = kl_loss(&cov, SIGMA_P).unwrap() + gamma_hinge(&[mass], KAPPA) * lambda;
    (loss, a.value(), mass.value())
}

/// Minimises KL + λ·hinge over `(ln a, b, ln c)` for a single-bond atom.
fn train(lambda: f64) -> (f64, f64) {
    let mut p = vec![(0.5 * SIGMA_P * SIGMA_P).ln(), 0.3, -0.2];
    let mut opt = AdamW::new(AdamWConfig { lr: 1e-2, ..Default::default() }, p.len());
    for step in 0..8000 {
        if step == 6000 {
            opt.config.lr = 1e-3;
        }
        let tape = Tape::new();
        let v: Vec<Var<'_>> = tape.vars(&p);
        let (loss, _, _) = objective(&v, lambda);
        let g = tape.backward(loss).collect(&v);
        opt.step(&mut p, &g, 0..3).unwrap();
    }
    let (_, a, mass) = objective(&p, lambda);
    (a, mass)
}

#[test]
fn kl_alone_returns_to_the_prior() {
    // KL is flat to second order in Γ near zero, so Γ decays slowly; the
    // scale tracks it through a(3 − Γ) = 3σ_p²
    let (a, mass) = train(0.0);
    assert!(mass < 0.05, "Γ = {mass}");
    let s2 = SIGMA_P * SIGMA_P;
    assert!((a * (3.0 - mass) - 3.0 * s2).abs() < 1e-4 * s2, "a = {a}, Γ = {mass}");
}

#[test]
fn hinge_equilibrium_matches_closed_form() {
    for (lambda, expect) in [(1.0, 0.381966), (10.0, 0.481559)] {
        let root = closed_form_gamma(lambda);
        assert!((root - expect).abs() < 1e-6, "λ = {lambda}: root {root}");
        let (a, mass) = train(lambda);
        assert!((mass - root).abs() < 1e-3, "λ = {lambda}: Γ = {mass}, expected {root}");
        // trace matching fixes the scale once Γ is known
        let a_star = 3.0 * SIGMA_P * SIGMA_P / (3.0 - root);
        assert!((a - a_star).abs() < 1e-3 * a_star, "λ = {lambda}: a = {a}, expected {a_star}");
    }
}
