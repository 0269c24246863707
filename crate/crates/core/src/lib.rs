//! Multiscale finite-element solver for steady and transient convection-diffusion
//! problems with high-contrast coefficients and inhomogeneous boundary data.
//!
//! The method is the relaxed constraint energy minimizing generalized multiscale
//! finite element method (CEM-GMsFEM):
//!
//! 1. a fine bilinear (Q1) discretization on a structured rectangular grid
//!    ([`grid`], [`assembly`]),
//! 2. per-coarse-element spectral problems that define an auxiliary space and
//!    its projection ([`spectral`]),
//! 3. oversampled local problems producing multiscale basis functions and
//!    Dirichlet/Neumann boundary correctors ([`cem`]),
//! 4. Galerkin solves in the multiscale space, including Backward Euler time
//!    stepping and Strang splitting for reaction terms ([`solvers`]),
//! 5. error norms and convergence tables ([`metrics`]).
//!
//! [`instance::Instance`] ties grids, coefficient fields and assembled forms
//! together and is the usual entry point.

pub mod assembly;
pub mod cache;
pub mod cem;
pub mod error;
pub mod fields;
pub mod grid;
pub mod instance;
pub mod metrics;
pub mod solvers;
pub mod spectral;

pub use assembly::{AssembledForms, SparseOperator};
pub use cem::{CorrectorSet, Layers, MultiscaleSpace};
pub use error::{CemError, Result};
pub use fields::{BoundaryData, MediumField, VelocityField, VelocityMode};
pub use grid::{BoundaryKind, BoundaryPartition, BoundarySpec, DomainSpec, GridPair};
pub use instance::{Instance, ProblemData};
pub use metrics::{ErrorReport, NormKind};
pub use solvers::{Scheme, SchemeConfig, SteadySolution, TransientState};
pub use spectral::{AuxSpace, PiProjector};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
