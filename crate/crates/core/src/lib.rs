//! Two-level hybrid Schwarz preconditioners for the 2D Helmholtz equation
//! with impedance boundary conditions, using a localized orthogonal
//! decomposition (LOD) coarse space.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: nested uniform triangulations of the unit square, coarse
//!   element patches and overlapping subdomains with a partition of unity.
//! - [`assembly`]: P1 stiffness, mass and boundary-mass matrices, the
//!   Helmholtz system, load vectors and the local subdomain matrices.
//! - [`transfer`]: quasi-interpolation, L² projection and prolongation
//!   between the coarse and fine spaces.
//! - [`lod`]: element correctors, the multiscale trial/test bases and the
//!   Petrov-Galerkin coarse solver.
//! - [`schwarz`]: the Dirichlet and impedance hybrid preconditioners plus the
//!   P1 coarse baselines.
//! - [`krylov`]: complex GMRES.
//! - [`oracle`]: dense reference computations for validation.
//! - [`harness`]: experiment configuration, runs, sweeps and property suites.

pub mod assembly;
pub mod error;
pub mod harness;
pub mod io;
pub mod krylov;
pub mod lod;
pub mod mesh;
pub mod oracle;
pub mod schwarz;
pub mod sparse;
pub mod transfer;

pub use num_complex::Complex64 as C64;

pub use assembly::{GlobalOperators, LocalOperators};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ResultRow};
pub use krylov::{GmresConfig, LinearOperator, SolveReport};
pub use lod::{CoarseSpace, CorrectorProblem};
pub use mesh::{MeshHierarchy, Patch, SubdomainLayout};
pub use schwarz::{LocalKind, Preconditioner};
pub use sparse::CsrMatrix;
pub use transfer::TransferOperators;
