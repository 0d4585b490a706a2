//! Numerical core for learning the discretized parameter-to-solution map of
//! the parametric diffusion equation
//!
//! ```text
//!     -div(a_y grad u_y) = f   in (0,1)^2,      u_y = 0 on the boundary,
//! ```
//!
//! with fully connected leaky-ReLU networks.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Everything here is a pure function of its inputs: file formats,
//! configuration and orchestration live in the `ppde` companion crate.
//!
//! Module map:
//!
//! * [`mesh`]: structured P1 triangulation of the unit square.
//! * [`sparse`]: CSR matrices, banded Cholesky and conjugate gradients.
//! * [`fem`]: stiffness/load/Gram assembly, Dirichlet constraints, solves and
//!   Gram-norm error metrics.
//! * [`coefficients`]: the five parametrized diffusion-coefficient families.
//! * [`dataset`]: (parameter, FE solution) records produced by the solver.
//! * [`nn`]: networks as sequences of (matrix, bias) pairs, realizations,
//!   weight counts, activation conversions and backpropagation.
//! * [`train`]: relative Gram-norm loss, ADAM and the training loop.
//! * [`stats`]: least-squares fits and convergence summaries.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod coefficients;
pub mod dataset;
mod error;
pub mod fem;
pub mod mesh;
pub mod nn;
pub mod sparse;
pub mod stats;
pub mod train;

pub use coefficients::{FamilyKind, ParameterBox, ParametricFamily};
pub use dataset::{Dataset, Record};
pub use error::{Error, Result};
pub use fem::{FeVector, FemSystem};
pub use mesh::Mesh;
pub use nn::{Gradients, Network, NetworkCounts};
pub use sparse::CsrMatrix;
pub use train::{AdamState, TrainConfig, TrainHistory};

/// Right-hand side used by every test-case: `f(x) = 20 + 10 x1 - 5 x2`.
pub fn default_rhs(x: [f64; 2]) -> f64 {
    20.0 + 10.0 * x[0] - 5.0 * x[1]
}
