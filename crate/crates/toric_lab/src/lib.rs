//! Numerical laboratory for Kähler–Ricci flow, `d_p` geodesics and destabilizing geodesic rays
//! on toric Fano manifolds of dimension 1 and 2.

pub mod catalog;
pub mod error;
pub mod functionals;
pub mod geodesics;
pub mod flow;
pub mod flow_checks;
pub mod grid;
pub mod io;
pub mod legendre;
pub mod linalg;
pub mod potentials;
pub mod ray;
pub mod reference;
pub mod sparse;

pub use catalog::{catalog_lookup, guillemin_potential, DelzantPolytope};
pub use error::{Error, Result};
pub use grid::MomentGrid;
