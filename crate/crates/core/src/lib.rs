//! Stabilizer-free weak Galerkin discretization of the stationary Stokes problem
//! on polygonal meshes of the unit square, including non-convex cells.
//!
//! The pipeline is: [`mesh`] builds a conforming polygonal mesh, [`polybasis`]
//! provides cell/edge bases and quadrature, [`weakops`] builds the element-local
//! discrete weak gradient and divergence, [`assembly`] assembles and solves the
//! global saddle-point system, and [`verification`] measures errors, convergence
//! orders and the stability constants.

pub mod error;
pub mod mesh;
pub mod polybasis;
pub mod weakops;
pub mod assembly;
pub mod verification;

pub use error::{Result, WgError};
pub use mesh::{Cell, Edge, MeshFamily, PolyMesh, ValidationReport, Vertex2};
pub use weakops::{LocalOperators, OperatorCache};
pub use assembly::{assemble, solve, solve_problem, solve_with, DofMap, GlobalSystem, SolveResult, SolverKind, StokesData, WeakField};
pub use verification::{ErrorReport, ManufacturedSolution, RateTable};
