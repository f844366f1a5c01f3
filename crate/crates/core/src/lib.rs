//! Restricted surface-spline interpolation on the unit sphere with local
//! Lagrange bases.
//!
//! The main entry points are [`locallag::build_local_basis`], which builds
//! the sparse local Lagrange basis, and
//! [`locallag::interpolate_preconditioned`], which uses it as a right
//! preconditioner for GMRES on the full interpolation system.

pub mod diagnostics;
pub mod error;
pub mod geom;
pub mod gramstudy;
pub mod io;
pub mod kernel;
pub mod lagrange;
pub mod locallag;
pub mod neighbors;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use geom::{NodeSet, SpherePoint};
pub use kernel::{KernelExpansion, KernelSpec};
pub use lagrange::LagrangeBasis;
pub use locallag::{FootprintRule, LocalBasis};
