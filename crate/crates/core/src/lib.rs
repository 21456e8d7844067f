//! Numerical laboratory for scalar backward stochastic differential equations
//!
//! ```text
//! Y_t = ξ + ∫_t^T f(s, Y_s, Z_s) ds − ∫_t^T Z_s dW_s
//! ```
//!
//! whose terminal values are only `ψ(·, μ)`-integrable, where
//! `ψ(x, μ) = x·exp(μ·√(2·ln(1 + x)))`.
//!
//! The crate is `no_std` (with `alloc`) so the numerical kernels can be embedded
//! anywhere; file formats, configuration and the command line live in the
//! `bsdelab` companion crate.
//!
//! Layout:
//! - [`psi`]: the weight function `ψ` and its inequalities.
//! - [`rng`], [`grid`], [`brownian`]: counter-based noise, time grids, Brownian
//!   ensembles, Itô sums and stochastic exponentials.
//! - [`generator`], [`terminal`], [`checks`]: generator and terminal-value
//!   specifications plus sampled assumption checkers.
//! - [`regression`], [`solver`], [`quadrature`]: least-squares Monte-Carlo
//!   solvers and closed-form references.
//! - [`measure`]: Girsanov kernels, importance weights and measure-solution prices.
//! - [`harness`]: experiment drivers producing [`harness::ExperimentReport`]s.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod brownian;
pub mod checks;
mod error;
pub mod generator;
pub mod grid;
pub mod harness;
pub mod measure;
pub mod psi;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod terminal;

pub use brownian::{AdaptedProcess, BrownianEnsemble, StochasticExponential};
pub use error::{Error, Result};
pub use generator::{GeneratorSpec, OsgoodFunction};
pub use grid::TimeGrid;
pub use measure::MeasureChange;
pub use psi::PsiParams;
pub use regression::RegressionBasis;
pub use solver::{BsdeProblem, SolutionEnsemble};
pub use terminal::TerminalSpec;
