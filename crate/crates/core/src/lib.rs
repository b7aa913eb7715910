//! Anisotropic, structure-aware denoising for atomistic systems.
//!
//! A noise generator maps a molecule to one full 3×3 covariance per atom,
//! built as an isotropic base minus softmax-weighted rank-one corrections
//! along bond directions. A denoiser is trained to recover the
//! inverse-covariance-scaled displacement, which is a score-matching
//! objective whose optimum is proportional to the force field.
//!
//! The crate is `no_std` + `alloc`. File formats, checkpoints and the CLI
//! live in the companion `anids` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod autodiff;
pub mod encoder;
pub mod error;
pub mod linalg3;
pub mod losses;
pub mod moldata;
pub mod noisegen;
pub mod optim;
pub mod rng;
pub mod score_oracle;
pub mod trainer;

pub use autodiff::{Gradients, Real, Tape, Var};
pub use error::{Error, Result};
pub use linalg3::{cholesky3, eigh3, invert3, Eigen3, LowerTri3, Mat3, SymMat3, Vec3};
