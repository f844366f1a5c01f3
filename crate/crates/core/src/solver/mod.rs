//! Linear algebra: bordered saddle systems, compressed sparse columns,
//! GMRES and symmetric eigenvalues.

mod dense;
mod eig;
mod gmres;
mod sparse;

pub use dense::{SaddleSolution, SaddleSystem};
pub use eig::{sym_eig_minmax, sym_eigenvalues};
pub use gmres::{gmres, FnOperator, GmresOptions, GmresReport, IdentityOperator, LinearOperator};
pub use sparse::CscMatrix;
