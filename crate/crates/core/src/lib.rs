//! Forward and inverse problems for random conductance networks.
//!
//! The forward side computes apparent homogenized conductivities (and the
//! pore-network permeability) of lattice networks whose edge conductances
//! are drawn from a Weibull law. The inverse side recovers the parameters
//! `(lambda, k)` of that law from a permeability and its relative variance,
//! by damped Newton minimization of a least-squares misfit.

pub mod error;
pub mod forward;
pub mod inverse;
pub mod microstructure;
pub mod special;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use error::{Error, Result};
pub use special::ThetaParams;
