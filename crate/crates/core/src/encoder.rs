//! Invariant message-passing encoder, the covariance heads, and the denoiser readouts.
//!
//! Only interatomic distances, atomic numbers and projections of forces onto
//! bond vectors enter the network, so every per-atom scalar it produces is
//! invariant under rigid motions. Vector outputs are sums of invariant
//! weights times unit bond vectors and therefore rotate with the input.
//!
//! All parameters live in one flat `f64` vector. [`ParamLayout`] records a
//! named, shaped slice per tensor; dense weights are row-major `[out][in]`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::linalg3::Vec3;
use crate::moldata::NeighborList;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub n_rbf: usize,
    /// Neighbour cutoff shared by the generator and the denoiser, Å.
    pub cutoff: f64,
    /// Largest atomic number with an embedding row.
    pub max_z: u32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { dim: 64, layers: 2, n_rbf: 16, cutoff: 5.0, max_z: 20 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.layers == 0 || self.n_rbf < 2 || self.max_z == 0 {
            return Err(Error::InvalidConfig(format!("degenerate encoder dimensions {self:?}")));
        }
        if !(self.cutoff > 0.0) {
            return Err(Error::InvalidConfig(format!("cutoff must be positive, got {}", self.cutoff)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named tensors packed into one flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    tensors: Vec<TensorSpec>,
    len: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.len;
        self.len += shape.iter().product::<usize>();
        self.tensors.push(TensorSpec { name, shape, offset });
        offset
    }

    fn dense(&mut self, prefix: &str, n_in: usize, n_out: usize) -> Dense {
        let weight = self.push(format!("{prefix}.weight"), alloc::vec![n_out, n_in]);
        let bias = self.push(format!("{prefix}.bias"), alloc::vec![n_out]);
        Dense { weight, bias, n_in, n_out }
    }

    fn mlp(&mut self, prefix: &str, n_in: usize, hidden: usize, n_out: usize) -> Mlp {
        Mlp {
            hidden: self.dense(&format!("{prefix}.hidden"), n_in, hidden),
            out: self.dense(&format!("{prefix}.out"), hidden, n_out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: usize,
    pub bias: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn forward<T: Real>(&self, params: &[T], x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.n_in);
        (0..self.n_out)
            .map(|o| {
                let row = self.weight + o * self.n_in;
                T::affine(&params[row..row + self.n_in], x, params[self.bias + o])
            })
            .collect()
    }
}

/// `out(tanh(hidden(x)))`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub hidden: Dense,
    pub out: Dense,
}

impl Mlp {
    pub fn forward<T: Real>(&self, params: &[T], x: &[T]) -> Vec<T> {
        let h: Vec<T> = self.hidden.forward(params, x).into_iter().map(T::tanh).collect();
        self.out.forward(params, &h)
    }

    pub fn scalar<T: Real>(&self, params: &[T], x: &[T]) -> T {
        debug_assert_eq!(self.out.n_out, 1);
        self.forward(params, x)[0]
    }
}

/// Gaussian radial basis with centres evenly spaced on `[0, cutoff]` and width equal to the spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBasis {
    pub centers: Vec<f64>,
    pub width: f64,
}

impl RadialBasis {
    pub fn new(n: usize, cutoff: f64) -> Self {
        let spacing = cutoff / (n - 1) as f64;
        Self { centers: (0..n).map(|k| k as f64 * spacing).collect(), width: spacing }
    }

    pub fn eval<T: Real>(&self, distance: T) -> Vec<T> {
        self.centers
            .iter()
            .map(|&c| {
                let z = (distance - c) / self.width;
                (-(z * z)).exp()
            })
            .collect()
    }
}

/// `(f_i · r̂_ij)·|r_ij|`, the raw invariant force feature of edge `i → j`.
pub fn force_edge_feature<T: Real>(f_i: &Vec3, r_ij: &Vec3<T>) -> T {
    let dist = r_ij.norm();
    r_ij.scale(T::constant(1.0) / dist).dot_f64(f_i) * dist
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageLayer {
    pub message: Mlp,
    pub update: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayout {
    pub embedding: usize,
    pub n_species: usize,
    pub dim: usize,
    pub layers: Vec<MessageLayer>,
    pub basis: RadialBasis,
}

impl EncoderLayout {
    fn new(params: &mut ParamLayout, prefix: &str, cfg: &EncoderConfig) -> Self {
        let d = cfg.dim;
        let embedding = params.push(format!("{prefix}.embedding"), alloc::vec![cfg.max_z as usize, d]);
        let edge_in = 2 * d + cfg.n_rbf + 1;
        let layers = (0..cfg.layers)
            .map(|l| MessageLayer {
                message: params.mlp(&format!("{prefix}.layer{l}.message"), edge_in, d, d),
                update: params.mlp(&format!("{prefix}.layer{l}.update"), 2 * d, d, d),
            })
            .collect();
        Self {
            embedding,
            n_species: cfg.max_z as usize,
            dim: d,
            layers,
            basis: RadialBasis::new(cfg.n_rbf, cfg.cutoff),
        }
    }

    /// Width of `[h_i; h_j; η(|r_ij|)]`.
    pub fn pair_width(&self) -> usize {
        2 * self.dim + self.basis.centers.len()
    }
}

/// Directed edge `i → j` with geometry carried in the evaluation scalar type.
#[derive(Debug, Clone)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    /// `X_i − X_j`
    pub r: Vec3<T>,
    pub distance: T,
    pub unit: Vec3<T>,
    pub rbf: Vec<T>,
}

/// Per-atom embeddings plus the edge geometry they were computed from.
#[derive(Debug, Clone)]
pub struct Encoded<T> {
    pub h: Vec<Vec<T>>,
    pub edges: Vec<Edge<T>>,
    /// Edges of atom `i` are `edges[edge_start[i]..edge_start[i + 1]]`.
    pub edge_start: Vec<usize>,
}

impl<T: Real> Encoded<T> {
    pub fn edges_of(&self, i: usize) -> &[Edge<T>] {
        &self.edges[self.edge_start[i]..self.edge_start[i + 1]]
    }

    /// `[h_i; h_j; η(|r_ij|)]`
    pub fn pair_input(&self, e: &Edge<T>) -> Vec<T> {
        let mut x = Vec::with_capacity(2 * self.h[0].len() + e.rbf.len());
        x.extend_from_slice(&self.h[e.i]);
        x.extend_from_slice(&self.h[e.j]);
        x.extend_from_slice(&e.rbf);
        x
    }
}

/// Runs the message-passing encoder.
///
/// `graph` fixes the connectivity; geometry is recomputed from `positions` so
/// that derivatives flow through coordinates. `forces`, when given, adds the
/// invariant edge feature `(f_i · r̂_ij)|r_ij|` to every message.
pub fn encode<T: Real>(
    layout: &EncoderLayout,
    params: &[T],
    atomic_numbers: &[u32],
    positions: &[Vec3<T>],
    graph: &NeighborList,
    forces: Option<&[Vec3]>,
) -> Result<Encoded<T>> {
    let n = positions.len();
    if atomic_numbers.len() != n {
        return Err(Error::DimensionMismatch { what: "atomic numbers", expected: n, found: atomic_numbers.len() });
    }
    if graph.len() != n {
        return Err(Error::DimensionMismatch { what: "neighbour list", expected: n, found: graph.len() });
    }
    if let Some(f) = forces {
        if f.len() != n {
            return Err(Error::DimensionMismatch { what: "force features", expected: n, found: f.len() });
        }
    }
    let d = layout.dim;

    let mut edges = Vec::with_capacity(graph.edge_count());
    let mut edge_start = Vec::with_capacity(n + 1);
    for (i, list) in graph.iter().enumerate() {
        edge_start.push(edges.len());
        for nb in list {
            let r = positions[i] - positions[nb.index];
            let distance = r.norm();
            let unit = r.scale(T::constant(1.0) / distance);
            edges.push(Edge { i, j: nb.index, r, distance, unit, rbf: layout.basis.eval(distance) });
        }
    }
    edge_start.push(edges.len());

    let mut h: Vec<Vec<T>> = atomic_numbers
        .iter()
        .map(|&z| {
            let row = z as usize;
            if row == 0 || row > layout.n_species {
                return Err(Error::DimensionMismatch {
                    what: "species embedding rows",
                    expected: layout.n_species,
                    found: row,
                });
            }
            let off = layout.embedding + (row - 1) * d;
            Ok(params[off..off + d].to_vec())
        })
        .collect::<Result<_>>()?;

    let edge_force: Vec<T> = match forces {
        Some(f) => edges.iter().map(|e| force_edge_feature(&f[e.i], &e.r)).collect(),
        None => alloc::vec![T::zero(); edges.len()],
    };

    for layer in &layout.layers {
        let messages: Vec<Vec<T>> = edges
            .iter()
            .zip(&edge_force)
            .map(|(e, &ff)| {
                let mut x = Vec::with_capacity(layer.message.hidden.n_in);
                x.extend_from_slice(&h[e.i]);
                x.extend_from_slice(&h[e.j]);
                x.extend_from_slice(&e.rbf);
                x.push(ff);
                layer.message.forward(params, &x)
            })
            .collect();
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let incoming = &messages[edge_start[i]..edge_start[i + 1]];
            let mut x = Vec::with_capacity(2 * d);
            x.extend_from_slice(&h[i]);
            for k in 0..d {
                let column: Vec<T> = incoming.iter().map(|m| m[k]).collect();
                x.push(T::sum(&column));
            }
            let delta = layer.update.forward(params, &x);
            next.push(h[i].iter().zip(delta).map(|(&a, b)| a + b).collect());
        }
        h = next;
    }

    Ok(Encoded { h, edges, edge_start })
}

/// Heads of the noise generator: `a_i = exp(ω₀(h_i))`, `b_ij = ω₁([h_i; h_j; η])`, `c_i = exp(ω₂(h_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorLayout {
    pub encoder: EncoderLayout,
    pub scale: Mlp,
    pub edge: Mlp,
    pub regulator: Mlp,
}

/// Raw head outputs; `log_scale` and `log_regulator` are `ω₀` and `ω₂` before exponentiation.
#[derive(Debug, Clone)]
pub struct HeadOutputs<T> {
    pub log_scale: Vec<T>,
    pub edge_logits: Vec<T>,
    pub log_regulator: Vec<T>,
}

impl<T: Real> HeadOutputs<T> {
    pub fn a(&self, i: usize) -> T {
        self.log_scale[i].exp()
    }

    pub fn c(&self, i: usize) -> T {
        self.log_regulator[i].exp()
    }
}

pub fn heads<T: Real>(layout: &GeneratorLayout, params: &[T], enc: &Encoded<T>, with_edges: bool) -> HeadOutputs<T> {
    let log_scale = enc.h.iter().map(|h| layout.scale.scalar(params, h)).collect();
    let log_regulator = if with_edges {
        enc.h.iter().map(|h| layout.regulator.scalar(params, h)).collect()
    } else {
        Vec::new()
    };
    let edge_logits = if with_edges {
        enc.edges.iter().map(|e| layout.edge.scalar(params, &enc.pair_input(e))).collect()
    } else {
        Vec::new()
    };
    HeadOutputs { log_scale, edge_logits, log_regulator }
}

/// Readouts of the denoiser: noise and force vectors as invariant-weighted sums of unit bond vectors, energy as a sum of atomic terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserLayout {
    pub encoder: EncoderLayout,
    pub noise: Mlp,
    pub force: Mlp,
    pub energy: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Readouts {
    pub noise: bool,
    pub energy_forces: bool,
}

#[derive(Debug, Clone)]
pub struct DenoiserOutput<T> {
    pub noise: Vec<Vec3<T>>,
    pub energy: T,
    pub forces: Vec<Vec3<T>>,
}

fn vector_readout<T: Real>(head: &Mlp, params: &[T], enc: &Encoded<T>) -> Vec<Vec3<T>> {
    (0..enc.h.len())
        .map(|i| {
            let edges = enc.edges_of(i);
            let w: Vec<T> = edges.iter().map(|e| head.scalar(params, &enc.pair_input(e))).collect();
            let component = |pick: fn(&Vec3<T>) -> T| -> T {
                let u: Vec<T> = edges.iter().map(|e| pick(&e.unit)).collect();
                T::affine(&w, &u, T::zero())
            };
            Vec3::new(component(|u| u.x), component(|u| u.y), component(|u| u.z))
        })
        .collect()
}

pub fn denoise<T: Real>(
    layout: &DenoiserLayout,
    params: &[T],
    atomic_numbers: &[u32],
    positions: &[Vec3<T>],
    graph: &NeighborList,
    force_features: Option<&[Vec3]>,
    readouts: Readouts,
) -> Result<DenoiserOutput<T>> {
    let enc = encode(&layout.encoder, params, atomic_numbers, positions, graph, force_features)?;
    let noise = if readouts.noise { vector_readout(&layout.noise, params, &enc) } else { Vec::new() };
    let (energy, forces) = if readouts.energy_forces {
        let atomic: Vec<T> = enc.h.iter().map(|h| layout.energy.scalar(params, h)).collect();
        (T::sum(&atomic), vector_readout(&layout.force, params, &enc))
    } else {
        (T::zero(), Vec::new())
    };
    Ok(DenoiserOutput { noise, energy, forces })
}

/// Complete parameter map: noise generator ψ followed by denoiser φ.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub config: EncoderConfig,
    pub params: ParamLayout,
    pub generator: GeneratorLayout,
    pub denoiser: DenoiserLayout,
    pub generator_range: Range<usize>,
    pub denoiser_range: Range<usize>,
}

impl ModelLayout {
    pub fn new(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut p = ParamLayout::default();
        let d = cfg.dim;
        let pair = 2 * d + cfg.n_rbf;

        let encoder = EncoderLayout::new(&mut p, "generator.encoder", cfg);
        let generator = GeneratorLayout {
            encoder,
            scale: p.mlp("generator.scale_head", d, d, 1),
            edge: p.mlp("generator.edge_head", pair, d, 1),
            regulator: p.mlp("generator.regulator_head", d, d, 1),
        };
        let generator_range = 0..p.len();

        let encoder = EncoderLayout::new(&mut p, "denoiser.encoder", cfg);
        let denoiser = DenoiserLayout {
            encoder,
            noise: p.mlp("denoiser.noise_head", pair, d, 1),
            force: p.mlp("denoiser.force_head", pair, d, 1),
            energy: p.mlp("denoiser.energy_head", d, d, 1),
        };
        let denoiser_range = generator_range.end..p.len();

        Ok(Self { config: cfg.clone(), params: p, generator, denoiser, generator_range, denoiser_range })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Uniform `±1/√fan_in` weights, zero biases, `±1` embeddings. The scale
    /// head's output bias starts at `ln σ_p²` so that `a_i ≈ σ_p²` initially.
    pub fn init(&self, seed: u64, sigma_p: f64) -> Vec<f64> {
        let mut rng = rng::stream(seed, Purpose::Init, &[]);
        let mut values = alloc::vec![0.0; self.len()];
        for t in self.params.tensors() {
            let slice = &mut values[t.range()];
            if t.name.ends_with(".bias") {
                continue;
            }
            let bound = if t.name.ends_with(".embedding") { 1.0 } else { 1.0 / libm::sqrt(t.shape[1] as f64) };
            for v in slice.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        values[self.generator.scale.out.bias] = libm::log(sigma_p * sigma_p);
        values
    }

    pub fn check(&self, params_len: usize) -> Result<()> {
        if params_len != self.len() {
            return Err(Error::DimensionMismatch { what: "parameter vector", expected: self.len(), found: params_len });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg3::Mat3;
    use alloc::vec;

    fn small() -> EncoderConfig {
        EncoderConfig { dim: 8, layers: 2, n_rbf: 6, cutoff: 4.0, max_z: 8 }
    }

    fn molecule() -> (Vec<u32>, Vec<Vec3>) {
        (
            vec![6, 1, 1, 8, 1],
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.09, 0.0, 0.0),
                Vec3::new(-0.36, 1.03, 0.0),
                Vec3::new(-0.4, -0.6, 1.1),
                Vec3::new(-0.2, -1.5, 1.3),
            ],
        )
    }

    fn embeddings(layout: &ModelLayout, params: &[f64], z: &[u32], x: &[Vec3], f: Option<&[Vec3]>) -> Vec<Vec<f64>> {
        let g = NeighborList::from_positions(x, layout.config.cutoff).unwrap();
        encode(&layout.generator.encoder, params, z, x, &g, f).unwrap().h
    }

    fn max_dev(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn rbf_peaks_at_centres_and_decays() {
        let basis = RadialBasis::new(16, 5.0);
        let at = basis.eval(basis.centers[3]);
        assert_eq!(at[3], 1.0);
        assert!(at.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(basis.eval(50.0).iter().all(|&v| v < 1e-6));
    }

    #[test]
    fn rbf_derivative_matches_finite_differences() {
        let basis = RadialBasis::new(8, 3.0);
        let tape = crate::Tape::new();
        for &d in &[0.3, 1.1, 2.57] {
            let x = tape.var(d);
            let out = basis.eval(x);
            let h = 1e-5;
            let (p, m) = (basis.eval(d + h), basis.eval(d - h));
            for k in 0..out.len() {
                let g = tape.backward(out[k]).wrt(x);
                let fd = (p[k] - m[k]) / (2.0 * h);
                assert!((g - fd).abs() <= 1e-6 * g.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn force_feature_cases() {
        let f = Vec3::new(3.0, 0.0, 0.0);
        assert!((force_edge_feature(&f, &Vec3::new(2.0, 0.0, 0.0)) - 6.0f64).abs() < 1e-15);
        assert_eq!(force_edge_feature(&f, &Vec3::new(0.0, 2.0, 0.0)), 0.0f64);
        let r = Mat3::from_quaternion(0.7, 0.1, -0.4, 0.2);
        let (f, d) = (Vec3::new(0.3, -1.2, 0.8), Vec3::new(1.1, 0.4, -0.5));
        let a: f64 = force_edge_feature(&f, &d);
        let b: f64 = force_edge_feature(&r.mul_vec(&f), &r.mul_vec(&d));
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn translation_and_rotation_invariance() {
        let layout = ModelLayout::new(&small()).unwrap();
        let params = layout.init(1, 0.1);
        let (z, x) = molecule();
        let forces: Vec<Vec3> = (0..5).map(|k| Vec3::new(0.1 * k as f64, -0.3, 0.2)).collect();
        let base = embeddings(&layout, &params, &z, &x, Some(&forces));

        let t = Vec3::new(5.0, -3.0, 2.0);
        let shifted: Vec<Vec3> = x.iter().map(|p| *p + t).collect();
        assert!(max_dev(&base, &embeddings(&layout, &params, &z, &shifted, Some(&forces))) < 1e-12);

        let r = Mat3::from_quaternion(0.4, -0.5, 0.3, 0.7);
        let rx: Vec<Vec3> = x.iter().map(|p| r.mul_vec(p)).collect();
        let rf: Vec<Vec3> = forces.iter().map(|p| r.mul_vec(p)).collect();
        assert!(max_dev(&base, &embeddings(&layout, &params, &z, &rx, Some(&rf))) < 1e-10);
    }

    #[test]
    fn permutation_equivariance() {
        let layout = ModelLayout::new(&small()).unwrap();
        let params = layout.init(2, 0.1);
        let (z, x) = molecule();
        let base = embeddings(&layout, &params, &z, &x, None);
        let perm = [3usize, 0, 4, 2, 1];
        let pz: Vec<u32> = perm.iter().map(|&k| z[k]).collect();
        let px: Vec<Vec3> = perm.iter().map(|&k| x[k]).collect();
        let out = embeddings(&layout, &params, &pz, &px, None);
        for (slot, &k) in perm.iter().enumerate() {
            for (a, b) in out[slot].iter().zip(&base[k]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_mismatched_parameters_and_species() {
        let layout = ModelLayout::new(&small()).unwrap();
        assert!(layout.check(layout.len() - 1).is_err());
        let params = layout.init(1, 0.1);
        let x = vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)];
        let g = NeighborList::from_positions(&x, 4.0).unwrap();
        let err = encode(&layout.generator.encoder, &params, &[1, 99], &x, &g, None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn heads_are_positive_and_unit_at_zero_logit() {
        let layout = ModelLayout::new(&small()).unwrap();
        let (z, x) = molecule();
        let g = NeighborList::from_positions(&x, 4.0).unwrap();
        let mut params = layout.init(3, 0.1);
        // zero the output layers so ω₀ = ω₂ = 0
        for m in [&layout.generator.scale, &layout.generator.regulator] {
            params[m.out.weight..m.out.weight + m.out.n_in].fill(0.0);
            params[m.out.bias] = 0.0;
        }
        let enc = encode(&layout.generator.encoder, &params, &z, &x, &g, None).unwrap();
        let out = heads(&layout.generator, &params, &enc, true);
        for i in 0..z.len() {
            assert_eq!(out.a(i), 1.0);
            assert_eq!(out.c(i), 1.0);
        }
        assert_eq!(out.edge_logits.len(), g.edge_count());
    }

    #[test]
    fn initial_scale_matches_prior() {
        let layout = ModelLayout::new(&small()).unwrap();
        let params = layout.init(4, 0.1);
        assert!((params[layout.generator.scale.out.bias] - libm::log(0.01)).abs() < 1e-15);
        assert_eq!(layout.generator_range.end, layout.denoiser_range.start);
        assert_eq!(layout.denoiser_range.end, layout.len());
        let total: usize = layout.params.tensors().iter().map(TensorSpec::len).sum();
        assert_eq!(total, layout.len());
    }
}
