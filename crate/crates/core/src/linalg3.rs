//! Exact 3×3 linear algebra on value types.
//!
//! `Vec3`, `SymMat3` and `LowerTri3` are generic over [`Real`] so that the
//! covariance factorisation can be differentiated on a tape. The
//! eigendecomposition and the general `Mat3` are `f64` only.

use core::ops::{Add, Mul, Neg, Sub};

use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Smallest admissible Cholesky pivot.
pub const PD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[T; 3]", into = "[T; 3]", bound(serialize = "T: Clone + serde::Serialize", deserialize = "T: serde::Deserialize<'de>")))]
pub struct Vec3<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }
}

impl<T> From<[T; 3]> for Vec3<T> {
    fn from([x, y, z]: [T; 3]) -> Self {
        Self { x, y, z }
    }
}

impl<T> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl<T: Real> Vec3<T> {
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn lift(v: Vec3<f64>) -> Self {
        Self::new(T::constant(v.x), T::constant(v.y), T::constant(v.z))
    }

    pub fn value(&self) -> Vec3<f64> {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Dot product against a constant vector.
    pub fn dot_f64(&self, o: &Vec3<f64>) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Vec3<f64> {
    pub fn max_abs(&self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<f64> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Symmetric 3×3 matrix stored as its six independent entries.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SymMat3<T = f64> {
    pub xx: T,
    pub yy: T,
    pub zz: T,
    pub xy: T,
    pub xz: T,
    pub yz: T,
}

impl<T: Real> SymMat3<T> {
    pub fn zero() -> Self {
        Self::diagonal(T::zero(), T::zero(), T::zero())
    }

    pub fn identity() -> Self {
        Self::scalar(T::constant(1.0))
    }

    pub fn scalar(s: T) -> Self {
        Self::diagonal(s, s, s)
    }

    pub fn diagonal(a: T, b: T, c: T) -> Self {
        Self { xx: a, yy: b, zz: c, xy: T::zero(), xz: T::zero(), yz: T::zero() }
    }

    /// Builds from a full row-major array; only the upper triangle is read.
    pub fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { xx: m[0][0], yy: m[1][1], zz: m[2][2], xy: m[0][1], xz: m[0][2], yz: m[1][2] }
    }

    /// `u ⊗ u`
    pub fn outer(u: &Vec3<T>) -> Self {
        Self {
            xx: u.x * u.x,
            yy: u.y * u.y,
            zz: u.z * u.z,
            xy: u.x * u.y,
            xz: u.x * u.z,
            yz: u.y * u.z,
        }
    }

    pub fn lift(m: &SymMat3<f64>) -> Self {
        let c = T::constant;
        Self { xx: c(m.xx), yy: c(m.yy), zz: c(m.zz), xy: c(m.xy), xz: c(m.xz), yz: c(m.yz) }
    }

    pub fn value(&self) -> SymMat3<f64> {
        SymMat3 {
            xx: self.xx.value(),
            yy: self.yy.value(),
            zz: self.zz.value(),
            xy: self.xy.value(),
            xz: self.xz.value(),
            yz: self.yz.value(),
        }
    }

    pub fn rows(&self) -> [[T; 3]; 3] {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }

    pub fn trace(&self) -> T {
        self.xx + self.yy + self.zz
    }

    pub fn determinant(&self) -> T {
        self.xx * (self.yy * self.zz - self.yz * self.yz)
            - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            xx: self.xx * s,
            yy: self.yy * s,
            zz: self.zz * s,
            xy: self.xy * s,
            xz: self.xz * s,
            yz: self.yz * s,
        }
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        Vec3::new(
            self.xx * v.x + self.xy * v.y + self.xz * v.z,
            self.xy * v.x + self.yy * v.y + self.yz * v.z,
            self.xz * v.x + self.yz * v.y + self.zz * v.z,
        )
    }

    /// `vᵀ M v`
    pub fn quadratic_form(&self, v: &Vec3<T>) -> T {
        v.dot(&self.mul_vec(v))
    }
}

impl<T: Real> Add for SymMat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            xx: self.xx + o.xx,
            yy: self.yy + o.yy,
            zz: self.zz + o.zz,
            xy: self.xy + o.xy,
            xz: self.xz + o.xz,
            yz: self.yz + o.yz,
        }
    }
}

impl<T: Real> Sub for SymMat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            xx: self.xx - o.xx,
            yy: self.yy - o.yy,
            zz: self.zz - o.zz,
            xy: self.xy - o.xy,
            xz: self.xz - o.xz,
            yz: self.yz - o.yz,
        }
    }
}

impl SymMat3<f64> {
    pub fn max_abs(&self) -> f64 {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz].iter().all(|v| v.is_finite())
    }

    /// `R M Rᵀ`
    pub fn rotate(&self, r: &Mat3) -> Self {
        let m = Mat3 { rows: self.rows() };
        let out = r.matmul(&m).matmul(&r.transpose());
        Self::from_rows(out.rows)
    }

    pub fn frobenius_norm(&self) -> f64 {
        let s = self.xx * self.xx
            + self.yy * self.yy
            + self.zz * self.zz
            + 2.0 * (self.xy * self.xy + self.xz * self.xz + self.yz * self.yz);
        libm::sqrt(s)
    }
}

/// Lower-triangular 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LowerTri3<T = f64> {
    pub l11: T,
    pub l21: T,
    pub l22: T,
    pub l31: T,
    pub l32: T,
    pub l33: T,
}

impl<T: Real> LowerTri3<T> {
    pub fn diagonal(&self) -> [T; 3] {
        [self.l11, self.l22, self.l33]
    }

    pub fn value(&self) -> LowerTri3<f64> {
        LowerTri3 {
            l11: self.l11.value(),
            l21: self.l21.value(),
            l22: self.l22.value(),
            l31: self.l31.value(),
            l32: self.l32.value(),
            l33: self.l33.value(),
        }
    }

    /// `L v`
    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        Vec3::new(
            self.l11 * v.x,
            self.l21 * v.x + self.l22 * v.y,
            self.l31 * v.x + self.l32 * v.y + self.l33 * v.z,
        )
    }

    /// `L Lᵀ`
    pub fn reassemble(&self) -> SymMat3<T> {
        SymMat3 {
            xx: self.l11 * self.l11,
            yy: self.l21 * self.l21 + self.l22 * self.l22,
            zz: self.l31 * self.l31 + self.l32 * self.l32 + self.l33 * self.l33,
            xy: self.l11 * self.l21,
            xz: self.l11 * self.l31,
            yz: self.l21 * self.l31 + self.l22 * self.l32,
        }
    }

    /// Solves `L x = b` by forward substitution.
    pub fn solve(&self, b: &Vec3<T>) -> Vec3<T> {
        let x = b.x / self.l11;
        let y = (b.y - self.l21 * x) / self.l22;
        let z = (b.z - self.l31 * x - self.l32 * y) / self.l33;
        Vec3::new(x, y, z)
    }

    /// Solves `Lᵀ x = b` by back substitution, i.e. returns `L⁻ᵀ b`.
    pub fn solve_transpose(&self, b: &Vec3<T>) -> Vec3<T> {
        let z = b.z / self.l33;
        let y = (b.y - self.l32 * z) / self.l22;
        let x = (b.x - self.l21 * y - self.l31 * z) / self.l11;
        Vec3::new(x, y, z)
    }

    /// `ln |L Lᵀ| = 2 Σ ln L_kk`
    pub fn log_det_reassembled(&self) -> T {
        (self.l11.ln() + self.l22.ln() + self.l33.ln()) * 2.0
    }
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky3<T: Real>(m: &SymMat3<T>) -> Result<LowerTri3<T>> {
    let pivot = |p: T| -> Result<T> {
        let v = p.value();
        if v > PD_TOLERANCE && v.is_finite() {
            Ok(p.sqrt())
        } else {
            Err(Error::NotPositiveDefinite { pivot: v })
        }
    };
    let l11 = pivot(m.xx)?;
    let l21 = m.xy / l11;
    let l31 = m.xz / l11;
    let l22 = pivot(m.yy - l21 * l21)?;
    let l32 = (m.yz - l31 * l21) / l22;
    let l33 = pivot(m.zz - l31 * l31 - l32 * l32)?;
    Ok(LowerTri3 { l11, l21, l22, l31, l32, l33 })
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn invert3<T: Real>(m: &SymMat3<T>) -> Result<SymMat3<T>> {
    let l = cholesky3(m)?;
    let one = T::constant(1.0);
    let zero = T::zero();
    let c0 = l.solve_transpose(&l.solve(&Vec3::new(one, zero, zero)));
    let c1 = l.solve_transpose(&l.solve(&Vec3::new(zero, one, zero)));
    let c2 = l.solve_transpose(&l.solve(&Vec3::new(zero, zero, one)));
    Ok(SymMat3 { xx: c0.x, yy: c1.y, zz: c2.z, xy: c0.y, xz: c0.z, yz: c1.z })
}

/// General 3×3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Self = Self { rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };

    pub fn from_columns(c: [Vec3; 3]) -> Self {
        Self {
            rows: [
                [c[0].x, c[1].x, c[2].x],
                [c[0].y, c[1].y, c[2].y],
                [c[0].z, c[1].z, c[2].z],
            ],
        }
    }

    /// Rotation matrix of the unit quaternion `(w, x, y, z)`; the input is normalised.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = libm::sqrt(w * w + x * x + y * y + z * z);
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Self {
            rows: [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
            ],
        }
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Self {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        Self { rows: out }
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }
}

/// Eigenpairs of a symmetric 3×3 matrix, eigenvalues ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen3 {
    pub values: [f64; 3],
    /// `vectors[k]` belongs to `values[k]`.
    pub vectors: [Vec3; 3],
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eigh3(m: &SymMat3<f64>) -> Eigen3 {
    let mut a = m.rows();
    let mut v = Mat3::IDENTITY.rows;
    let scale = m.max_abs();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off == 0.0 || libm::sqrt(off) <= f64::EPSILON * 1e-3 * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            // rotation angle that annihilates a[p][q]
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / libm::sqrt(t * t + 1.0);
            let s = t * c;
            for row in a.iter_mut() {
                let akp = row[p];
                let akq = row[q];
                row[p] = c * akp - s * akq;
                row[q] = s * akp + c * akq;
            }
            let (rp, rq) = (a[p], a[q]);
            for k in 0..3 {
                a[p][k] = c * rp[k] - s * rq[k];
                a[q][k] = s * rp[k] + c * rq[k];
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let column = |k: usize| Vec3::new(v[0][k], v[1][k], v[2][k]);
    Eigen3 {
        values: order.map(|k| a[k][k]),
        vectors: order.map(column),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: [[f64; 3]; 3]) -> SymMat3 {
        SymMat3::from_rows(rows)
    }

    fn max_diff(a: &SymMat3, b: &SymMat3) -> f64 {
        (*a - *b).max_abs()
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky3(&SymMat3::<f64>::identity()).unwrap();
        assert_eq!(l.diagonal(), [1.0, 1.0, 1.0]);
        assert_eq!((l.l21, l.l31, l.l32), (0.0, 0.0, 0.0));
        let l = cholesky3(&SymMat3::diagonal(4.0, 9.0, 16.0)).unwrap();
        assert_eq!(l.diagonal(), [2.0, 3.0, 4.0]);
    }

    #[test]
    fn cholesky_coupled_block() {
        let m = sym([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let l = cholesky3(&m).unwrap();
        assert!((l.l11 - core::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((l.l21 - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((l.l22 - 1.224745).abs() < 1e-6);
        assert_eq!(l.l33, 1.0);
        assert!(max_diff(&l.reassemble(), &m) <= 1e-12 * m.max_abs());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = sym([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(cholesky3(&m), Err(Error::NotPositiveDefinite { .. })));
        assert!(cholesky3(&SymMat3::<f64>::zero()).is_err());
    }

    #[test]
    fn inverse_of_scalar_matrix() {
        let inv = invert3(&SymMat3::scalar(0.04)).unwrap();
        assert!(max_diff(&inv, &SymMat3::scalar(25.0)) < 1e-12);
        assert_eq!(invert3(&SymMat3::<f64>::identity()).unwrap(), SymMat3::identity());
    }

    #[test]
    fn lone_bond_spectrum() {
        let u = Vec3::new(1.0, 0.0, 0.0);
        let m = SymMat3::identity() - SymMat3::outer(&u).scale(0.5);
        let e = eigh3(&m);
        assert!((e.values[0] - 0.5).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        assert!((e.values[2] - 1.0).abs() < 1e-14);
        assert!((e.vectors[0].dot(&u).abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_eigenbasis_is_orthonormal() {
        let e = eigh3(&SymMat3::identity());
        assert_eq!(e.values, [1.0, 1.0, 1.0]);
        assert!((Mat3::from_columns(e.vectors).determinant().abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quaternion_rotation_is_proper() {
        let r = Mat3::from_quaternion(0.3, -0.2, 0.9, 0.1);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let rrt = r.matmul(&r.transpose());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((rrt.rows[i][j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn triangular_solves_invert_the_factor() {
        let m = sym([[3.0, 0.4, -0.2], [0.4, 2.0, 0.3], [-0.2, 0.3, 1.5]]);
        let l = cholesky3(&m).unwrap();
        let b = Vec3::new(0.3, -1.2, 2.5);
        let x = l.solve(&b);
        assert!((l.mul_vec(&x) - b).max_abs() < 1e-14);
        // Lᵀ (L⁻ᵀ b) = b
        let y = l.solve_transpose(&b);
        let lt_y = Vec3::new(
            l.l11 * y.x + l.l21 * y.y + l.l31 * y.z,
            l.l22 * y.y + l.l32 * y.z,
            l.l33 * y.z,
        );
        assert!((lt_y - b).max_abs() < 1e-14);
        assert!((l.log_det_reassembled() - libm::log(m.determinant())).abs() < 1e-13);
    }
}
