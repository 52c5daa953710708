//! Dimer models with Fock weights on periodic minimal bipartite graphs,
//! parametrized by M-curves of arbitrary genus.
//!
//! The crate is organized around the pipeline
//! graph + M-curve backend + angle map -> Kasteleyn operator -> spectral
//! curve -> Gibbs measures, slopes and thermodynamic functions, with the
//! theta-function layer at the bottom.

pub mod error;
pub mod angles;
pub mod gibbs;
pub mod graph;
pub mod kasteleyn;
pub mod model;
pub mod moves;
pub mod poly;
pub mod quadrature;
pub mod surface;
pub mod theta;

pub use error::{Error, Result};
