//! Gaussian Minkowski functionals (GMFs), Gaussian tube formulas and
//! kinematic-formula checks for random fields built from Itô integrals.
//!
//! The crate is organised bottom-up:
//!
//! * [`series`]: truncated power series in the tube radius, Hermite
//!   polynomials and the standard normal density / tail.
//! * [`malliavin`]: finite-dimensional Gaussian calculus (divergence, unit
//!   normals, Carleman–Fredholm determinants, Ramer densities).
//! * [`gmf`]: closed-form GMFs of canonical regions and the kernel-smoothed
//!   co-area Monte Carlo estimator for general smooth regions.
//! * [`tube`]: direct Monte Carlo of Gaussian tube volumes through distance
//!   oracles, used to validate the tube series.
//! * [`wiener`]: the cylindrical Itô-sum functional `F_n` with analytic
//!   derivatives and the GMF convergence study.
//! * [`field`]: simulation of `f(x) = ∫ V(B^x) dB^x` on flat parameter
//!   spaces, excursion-set Euler characteristics and the kinematic formula.
//!
//! Every Monte Carlo routine takes a root seed and derives per-chunk streams
//! from it (see [`rng`]), so results are reproducible bit-for-bit
//! regardless of the rayon pool size.

// NaN must fail positivity checks, and index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod field;
pub mod functional;
pub mod gmf;
pub mod malliavin;
pub mod rng;
pub mod series;
pub mod tube;
pub mod wiener;

pub use error::{Error, Result};
