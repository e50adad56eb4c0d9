//! Fictitious-domain finite elements for a stationary fluid–structure
//! interaction problem with a distributed Lagrange multiplier.
//!
//! The fluid (velocity/pressure) lives on a structured triangulation of a
//! rectangle and uses the P1-iso-P2/P1 pair; the solid displacement and the
//! multiplier are continuous P1 fields on an independent triangulation of the
//! solid reference domain. The two grids are non-matching, so the coupling
//! matrix `C_f` can be assembled either *exactly* (mesh intersection plus a
//! composite quadrature rule) or *approximately* (a single quadrature rule
//! per solid element). Both are provided, together with the saddle-point
//! solver, manufactured-solution error norms and the convergence drivers.
//!
//! Element loops run on rayon when the `parallel` feature is enabled (the
//! default); without it every loop falls back to a sequential iterator.
//! Results are bitwise identical either way.

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod fespace;
pub mod geom;
pub mod manufactured;
pub mod mesh;
pub mod par;
pub mod point;
pub mod quadrature;
pub mod solver;
pub mod sparse;

pub use error::{FdlmError, Result};
pub use point::Point2;
