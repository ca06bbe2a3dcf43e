//! Inverse problem: recover `(lambda, k)` from a permeability and its
//! relative variance.

pub mod newton;
pub mod objective;

use serde::{Deserialize, Serialize};

pub use newton::{
    newton_fit, FitRecord, FiniteDifference, NewtonIterate, NewtonOptions, NewtonTrace, Objective,
    StopReason,
};
pub use objective::{
    aux_fg, generate_synthetic_obs, objective_1d, objective_nm, AuxFg, FInfinity, Objective1d,
    WeightField,
};

use crate::error::{Error, Result};

/// Observed macroscopic quantities on boxes of size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    /// Observed permeability.
    pub k_obs: f64,
    /// Observed relative variance of the permeability.
    pub s_obs: f64,
    pub n: usize,
}

impl Observations {
    pub fn new(k_obs: f64, s_obs: f64, n: usize) -> Result<Self> {
        if !(k_obs.is_finite() && k_obs > 0.0) {
            return Err(Error::Invalid(format!("observed permeability must be > 0, got {k_obs}")));
        }
        if !(s_obs.is_finite() && s_obs > 0.0) {
            return Err(Error::Invalid(format!(
                "observed relative variance must be > 0, got {s_obs}"
            )));
        }
        if n < 2 {
            return Err(Error::Invalid(format!("observation box size must be >= 2, got {n}")));
        }
        Ok(Self { k_obs, s_obs, n })
    }
}

/// Relative weights of the permeability and variance residuals.
pub const EQUAL_WEIGHTS: [f64; 2] = [1.0, 1.0];

pub(crate) fn check_weights(weights: [f64; 2]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Invalid(format!("weights must be positive, got {weights:?}")));
    }
    Ok(())
}
