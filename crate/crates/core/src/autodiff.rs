//! Reverse-mode automatic differentiation on a scalar tape.
//!
//! Every model, loss and linear-algebra routine in this crate is written once
//! against the [`Real`] trait. Evaluating with `f64` gives a plain forward
//! pass; evaluating with [`Var`] records a Wengert list on a [`Tape`] that
//! [`Tape::backward`] walks in reverse.
//!
//! Records are variable-arity: a node stores its parents and the local
//! partial derivative with respect to each. Dense layers use [`Real::affine`],
//! which records one node per output neuron instead of `2n` binary nodes.

use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Scalar arithmetic shared by `f64` and tape variables.
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A value that carries no derivative.
    fn constant(value: f64) -> Self;
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn relu(self) -> Self;
    fn pow2(self) -> Self;

    /// `Σ weights[k]·inputs[k] + bias`.
    fn affine(weights: &[Self], inputs: &[Self], bias: Self) -> Self;

    fn sum(items: &[Self]) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn checked_ln(self) -> Result<Self> {
        let v = self.value();
        if v > 0.0 && v.is_finite() {
            Ok(self.ln())
        } else {
            Err(Error::Domain { op: "ln", value: v })
        }
    }

    fn checked_sqrt(self) -> Result<Self> {
        let v = self.value();
        if v > 0.0 && v.is_finite() {
            Ok(self.sqrt())
        } else {
            Err(Error::Domain { op: "sqrt", value: v })
        }
    }

    fn checked_div(self, rhs: Self) -> Result<Self> {
        if rhs.value() == 0.0 {
            Err(Error::Domain { op: "division by", value: 0.0 })
        } else {
            Ok(self / rhs)
        }
    }
}

impl Real for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    #[inline]
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    #[inline]
    fn pow2(self) -> Self {
        self * self
    }
    #[inline]
    fn affine(weights: &[Self], inputs: &[Self], bias: Self) -> Self {
        debug_assert_eq!(weights.len(), inputs.len());
        weights.iter().zip(inputs).fold(bias, |acc, (w, x)| acc + w * x)
    }
    #[inline]
    fn sum(items: &[Self]) -> Self {
        items.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpCode {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Sqrt,
    Tanh,
    Relu,
    Pow2,
    Affine,
    Sum,
}

#[derive(Default)]
struct Records {
    ops: Vec<OpCode>,
    values: Vec<f64>,
    // parents of node k live in parents[start[k]..start[k + 1]]
    start: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

/// Append-only operation log. One tape per thread; clear between steps.
#[derive(Default)]
pub struct Tape {
    records: RefCell<Records>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.records.borrow();
        f.debug_struct("Tape")
            .field("nodes", &r.ops.len())
            .field("edges", &r.parents.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        let tape = Self::default();
        tape.records.borrow_mut().start.push(0);
        tape
    }

    pub fn len(&self) -> usize {
        self.records.borrow().ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        let r = self.records.get_mut();
        r.ops.clear();
        r.values.clear();
        r.start.clear();
        r.start.push(0);
        r.parents.clear();
        r.partials.clear();
    }

    /// New independent input.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(OpCode::Leaf, value, core::iter::empty())
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// The opcode and parent indices of a recorded node.
    pub fn record(&self, node: usize) -> (OpCode, Vec<u32>) {
        let r = self.records.borrow();
        let (a, b) = (r.start[node] as usize, r.start[node + 1] as usize);
        (r.ops[node], r.parents[a..b].to_vec())
    }

    fn push<I>(&self, op: OpCode, value: f64, parents: I) -> Var<'_>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut r = self.records.borrow_mut();
        let index = r.ops.len() as u32;
        r.ops.push(op);
        r.values.push(value);
        for (p, d) in parents {
            r.parents.push(p);
            r.partials.push(d);
        }
        let end = r.parents.len() as u32;
        r.start.push(end);
        Var { tape: Some(self), index, value }
    }

    /// Adjoints of every node with respect to `root`.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        let r = self.records.borrow();
        let mut adjoint = alloc::vec![0.0; r.ops.len()];
        if let Some(t) = root.tape {
            debug_assert!(core::ptr::eq(t, self), "root belongs to another tape");
            adjoint[root.index as usize] = 1.0;
            for node in (0..=root.index as usize).rev() {
                let a = adjoint[node];
                if a == 0.0 {
                    continue;
                }
                let (lo, hi) = (r.start[node] as usize, r.start[node + 1] as usize);
                for k in lo..hi {
                    adjoint[r.parents[k] as usize] += a * r.partials[k];
                }
            }
        }
        Gradients { adjoint }
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoint: Vec<f64>,
}

impl Gradients {
    /// d(root)/d(var); zero for constants and for nodes recorded after the root.
    pub fn wrt(&self, var: Var<'_>) -> f64 {
        match var.tape {
            Some(_) => self.adjoint.get(var.index as usize).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    pub fn collect(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// A scalar on a tape, or a free-standing constant when `tape` is `None`.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var#{}({})", self.index, self.value),
            None => write!(f, "Const({})", self.value),
        }
    }
}

impl<'t> Var<'t> {
    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.index as usize)
    }

    fn unary(self, op: OpCode, value: f64, partial: f64) -> Self {
        match self.tape {
            Some(t) => t.push(op, value, [(self.index, partial)]),
            None => Var::constant(value),
        }
    }

    fn binary(a: Self, b: Self, op: OpCode, value: f64, da: f64, db: f64) -> Self {
        match (a.tape, b.tape) {
            (None, None) => Var::constant(value),
            (Some(t), None) => t.push(op, value, [(a.index, da)]),
            (None, Some(t)) => t.push(op, value, [(b.index, db)]),
            (Some(t), Some(u)) => {
                debug_assert!(core::ptr::eq(t, u), "mixing variables from two tapes");
                t.push(op, value, [(a.index, da), (b.index, db)])
            }
        }
    }
}

impl<'t> Real for Var<'t> {
    fn constant(value: f64) -> Self {
        Var { tape: None, index: u32::MAX, value }
    }
    fn value(self) -> f64 {
        self.value
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.value);
        self.unary(OpCode::Exp, e, e)
    }
    fn ln(self) -> Self {
        self.unary(OpCode::Ln, libm::log(self.value), 1.0 / self.value)
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.value);
        self.unary(OpCode::Sqrt, s, 0.5 / s)
    }
    fn tanh(self) -> Self {
        let t = libm::tanh(self.value);
        self.unary(OpCode::Tanh, t, 1.0 - t * t)
    }
    fn relu(self) -> Self {
        if self.value > 0.0 {
            self.unary(OpCode::Relu, self.value, 1.0)
        } else {
            self.unary(OpCode::Relu, 0.0, 0.0)
        }
    }
    fn pow2(self) -> Self {
        self.unary(OpCode::Pow2, self.value * self.value, 2.0 * self.value)
    }

    fn affine(weights: &[Self], inputs: &[Self], bias: Self) -> Self {
        debug_assert_eq!(weights.len(), inputs.len());
        let value = weights
            .iter()
            .zip(inputs)
            .fold(bias.value, |acc, (w, x)| acc + w.value * x.value);
        let tape = bias
            .tape
            .or_else(|| weights.iter().find_map(|w| w.tape))
            .or_else(|| inputs.iter().find_map(|x| x.tape));
        match tape {
            None => Var::constant(value),
            Some(t) => {
                let parents = weights
                    .iter()
                    .zip(inputs)
                    .flat_map(|(w, x)| [(w.tape, w.index, x.value), (x.tape, x.index, w.value)])
                    .chain(core::iter::once((bias.tape, bias.index, 1.0)))
                    .filter_map(|(tape, index, d)| tape.map(|_| (index, d)));
                t.push(OpCode::Affine, value, parents)
            }
        }
    }

    fn sum(items: &[Self]) -> Self {
        let value = items.iter().map(|x| x.value).sum();
        match items.iter().find_map(|x| x.tape) {
            None => Var::constant(value),
            Some(t) => t.push(
                OpCode::Sum,
                value,
                items.iter().filter(|x| x.tape.is_some()).map(|x| (x.index, 1.0)),
            ),
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Var::binary(self, rhs, OpCode::Add, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Var::binary(self, rhs, OpCode::Sub, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Var::binary(self, rhs, OpCode::Mul, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        Var::binary(self, rhs, OpCode::Div, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(OpCode::Neg, -self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(OpCode::Add, self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(OpCode::Sub, self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(OpCode::Mul, self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.unary(OpCode::Div, self.value / rhs, 1.0 / rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[k] += h;
                m[k] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn elementary_values() {
        let tape = Tape::new();
        assert_eq!(tape.var(0.0).exp().value(), 1.0);
        assert_eq!(tape.var(1.0).ln().value(), 0.0);
        assert_eq!(tape.var(-2.0).relu().value(), 0.0);
    }

    #[test]
    fn square_derivative() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = x * x;
        assert_eq!(tape.backward(y).wrt(x), 6.0);
        let z = x.pow2();
        assert_eq!(tape.backward(z).wrt(x), 6.0);
    }

    #[test]
    fn constant_root_has_zero_gradients() {
        let tape = Tape::new();
        let xs = tape.vars(&[1.0, 2.0, 3.0]);
        let root = Var::constant(4.0);
        let g = tape.backward(root);
        assert!(g.collect(&xs).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::new();
        let values: Vec<f64> = (0..10).map(|k| k as f64 * 0.7 - 3.0).collect();
        let xs = tape.vars(&values);
        let squares: Vec<_> = xs.iter().map(|&x| x * x).collect();
        let root = Var::sum(&squares);
        let g = tape.backward(root).collect(&xs);
        for (gk, xk) in g.iter().zip(&values) {
            assert_eq!(*gk, 2.0 * xk);
        }
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        assert_eq!(tape.backward(x.relu()).wrt(x), 0.0);
    }

    #[test]
    fn domain_errors() {
        let tape = Tape::new();
        assert!(matches!(tape.var(-1.0).checked_ln(), Err(Error::Domain { .. })));
        assert!(matches!(tape.var(0.0).checked_sqrt(), Err(Error::Domain { .. })));
        assert!(tape.var(1.0).checked_div(tape.var(0.0)).is_err());
        assert!((-1.0f64).checked_ln().is_err());
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = x * 3.0 + x.exp() + x * x;
        let expected = 3.0 + libm::exp(2.0) + 4.0;
        assert!((tape.backward(y).wrt(x) - expected).abs() < 1e-12);
    }

    #[test]
    fn affine_matches_expanded_form() {
        let tape = Tape::new();
        let w = tape.vars(&[0.5, -1.5, 2.0]);
        let x = tape.vars(&[1.0, 0.25, -0.75]);
        let b = tape.var(0.1);
        let fused = Var::affine(&w, &x, b).tanh();
        let expanded = (w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + b).tanh();
        assert!((fused.value() - expanded.value()).abs() < 1e-15);
        let gf = tape.backward(fused);
        let ge = tape.backward(expanded);
        for v in w.iter().chain(&x).chain([&b]) {
            assert!((gf.wrt(*v) - ge.wrt(*v)).abs() < 1e-14);
        }
    }

    #[test]
    fn composite_expression_matches_finite_differences() {
        fn f<T: Real>(x: &[T]) -> T {
            let a = (x[0] * x[1] + x[2].exp()).ln();
            let b = (x[3].pow2() + 1.0).sqrt() / (x[0] + 3.0);
            let c = Real::affine(&x[..2], &x[2..4], x[4]).tanh();
            a * b - c + x[4].relu() * 0.5
        }
        let x0 = [0.7, 1.3, -0.4, 0.9, 0.2];
        let tape = Tape::new();
        let xs = tape.vars(&x0);
        let g = tape.backward(f(&xs)).collect(&xs);
        let fd = central_difference(f, &x0, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-8), "{a} vs {b}");
        }
    }

    #[test]
    fn linearity_of_backward() {
        let tape = Tape::new();
        let xs = tape.vars(&[0.3, -0.8]);
        let f = xs[0].exp() * xs[1];
        let g = (xs[0] - xs[1]).tanh();
        let combo = f * 2.5 + g * -1.5;
        let gf = tape.backward(f).collect(&xs);
        let gg = tape.backward(g).collect(&xs);
        let gc = tape.backward(combo).collect(&xs);
        for k in 0..2 {
            assert_eq!(gc[k], 2.5 * gf[k] + -1.5 * gg[k]);
        }
    }

    #[test]
    fn records_are_topologically_ordered() {
        let tape = Tape::new();
        let x = tape.var(1.0);
        let y = tape.var(2.0);
        let _z = (x * y).exp();
        assert_eq!(tape.len(), 4);
        let (op, parents) = tape.record(2);
        assert_eq!(op, OpCode::Mul);
        assert_eq!(parents, vec![0, 1]);
        for node in 0..tape.len() {
            assert!(tape.record(node).1.iter().all(|&p| (p as usize) < node));
        }
    }

    #[test]
    fn clear_resets_the_tape() {
        let mut tape = Tape::new();
        {
            let x = tape.var(1.0);
            let _ = x + x;
        }
        tape.clear();
        assert!(tape.is_empty());
        let x = tape.var(5.0);
        assert_eq!(tape.backward(x * 2.0).wrt(x), 2.0);
    }
}
