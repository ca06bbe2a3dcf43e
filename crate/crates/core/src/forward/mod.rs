//! Forward problem: apparent tensors of single realizations and their
//! Monte-Carlo statistics.

pub mod cg;
pub mod corrector;
pub mod mc;
pub mod pnm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use corrector::{
    apparent_tensor, apparent_tensor_from_field, solve_corrector, BoundaryCondition, Corrector,
    SolverOptions,
};
pub use mc::{mc_summary, write_samples_csv, McSummary};
pub use pnm::{pnm_permeability, pnm_residual, solve_pnm_pressure, PressureField};

use crate::error::{Error, Result};
use crate::microstructure::{derive_seed, draw_uniform_field, ConductanceField, MicroLaw};
use crate::special::ThetaParams;

/// `((1/N) Σ 1/a_x)^-1` of a one-dimensional field.
pub fn harmonic_mean_1d(field: &ConductanceField) -> Result<f64> {
    if field.layout.dim != 1 {
        return Err(Error::DegenerateField(format!(
            "harmonic mean needs a 1D field, got dimension {}",
            field.layout.dim
        )));
    }
    let values = field.values();
    if let Some(a) = values.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::DegenerateField(format!("conductance {a}")));
    }
    let mean_inverse = values.iter().map(|a| 1.0 / a).sum::<f64>() / values.len() as f64;
    Ok(1.0 / mean_inverse)
}

/// Apparent tensor of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApparentSample {
    /// Row-major `dim x dim`.
    pub tensor: Vec<f64>,
    /// `e_1 . A*_N e_1`.
    pub permeability: f64,
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    pub theta: Option<ThetaParams>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardConfig {
    pub dim: usize,
    pub n: usize,
    pub bc: BoundaryCondition,
    pub solver: SolverOptions,
}

impl ForwardConfig {
    pub fn new(dim: usize, n: usize) -> Self {
        Self {
            dim,
            n,
            bc: BoundaryCondition::Periodic,
            solver: SolverOptions::default(),
        }
    }
}

/// Apparent tensor of a given field.
///
/// In one dimension every boundary condition yields a constant flux equal
/// to the harmonic mean, so the closed form is used instead of a linear
/// solve.
pub fn apparent_sample(field: &ConductanceField, bc: BoundaryCondition, solver: SolverOptions) -> Result<ApparentSample> {
    let tensor = if field.layout.dim == 1 {
        vec![harmonic_mean_1d(field)?]
    } else {
        apparent_tensor_from_field(field, bc, solver)?
    };
    let origin = field.origin;
    Ok(ApparentSample {
        permeability: tensor[0],
        tensor,
        n: field.layout.n,
        dim: field.layout.dim,
        seed: origin.map_or(0, |o| o.seed),
        theta: origin.and_then(|o| o.theta),
    })
}

/// Draws the field for `seed` under `law` and computes its apparent tensor.
pub fn realization<L: MicroLaw + ?Sized>(law: &L, seed: u64, cfg: &ForwardConfig) -> Result<ApparentSample> {
    let uniform = draw_uniform_field(cfg.dim, cfg.n, seed)?;
    let field = ConductanceField::from_law(&uniform, law)?;
    apparent_sample(&field, cfg.bc, cfg.solver)
}

/// Seed of realization `m` in a run keyed by `base_seed`.
pub fn realization_seed(base_seed: u64, m: usize) -> u64 {
    derive_seed(base_seed, m as u64)
}

/// `m` independent realizations, computed in parallel on the current rayon
/// pool and returned in realization order.
pub fn run_monte_carlo<L: MicroLaw + ?Sized>(
    law: &L,
    base_seed: u64,
    m: usize,
    cfg: &ForwardConfig,
) -> Result<Vec<ApparentSample>> {
    (0..m)
        .into_par_iter()
        .map(|i| realization(law, realization_seed(base_seed, i), cfg))
        .collect()
}
