//! Reduced-basis neural operators for 1D nonlinear PDE benchmarks.

pub mod error;
pub mod experiment;
pub mod field;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pde;
pub mod polymap;
pub mod reduction;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
pub use field::{CovarianceParams, Mesh1D, SpectralCovariance};
pub use pde::{generate_dataset, Jacobian, PdeProblem, ProblemKind, SampleSet};
pub use reduction::{BasisKind, BasisSource, ReducedBasis};
