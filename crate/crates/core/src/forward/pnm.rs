//! Pore-network pressure problem.
//!
//! Pores sit on the nodes `(i, j)`, `i = 0..=n`, of a box that is periodic in
//! the transverse direction (`n` rows in 2D, a single row in 1D). Columns
//! `i = 0` and `i = n` are connected to reservoirs at pressures `P_O` and
//! `P_I`. Mass conservation at every interior pore,
//! `Σ_{y ~ x} a(x, y) (P(y) - P(x)) = 0`, fixes the pressure.
//!
//! This module assembles the conservation stencil directly on the pore grid,
//! independently of the edge operator used for correctors.

use super::cg::{self, CgProblem};
use super::corrector::SolverOptions;
use crate::error::{Error, Result};
use crate::microstructure::ConductanceField;

/// Pressure at every pore, `(n + 1)` columns times `rows` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub n: usize,
    pub rows: usize,
    values: Vec<f64>,
    pub iterations: usize,
}

impl PressureField {
    #[inline]
    pub fn get(&self, column: usize, row: usize) -> f64 {
        self.values[row * (self.n + 1) + column]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Conductances seen from one pore: (east, west, north, south).
#[inline]
fn stencil(field: &ConductanceField, rows: usize, i: usize, j: usize) -> [f64; 4] {
    let n = field.layout.n;
    let site = |i: usize, j: usize| j * n + i;
    let east = field.get(site(i, j), 0);
    let west = field.get(site(i - 1, j), 0);
    if rows == 1 {
        return [east, west, 0.0, 0.0];
    }
    let north = field.get(site(i, j), 1);
    let south = field.get(site(i, (j + rows - 1) % rows), 1);
    [east, west, north, south]
}

/// Mass balance `Σ_y a(x, y)(P(y) - P(x))` at interior pore `(i, j)`.
fn mass_balance(field: &ConductanceField, p: &PressureField, i: usize, j: usize) -> f64 {
    let rows = p.rows;
    let [e, w, nn, s] = stencil(field, rows, i, j);
    let here = p.get(i, j);
    let mut sum = e * (p.get(i + 1, j) - here) + w * (p.get(i - 1, j) - here);
    if rows > 1 {
        sum += nn * (p.get(i, (j + 1) % rows) - here) + s * (p.get(i, (j + rows - 1) % rows) - here);
    }
    sum
}

/// Solves the conservation equations with reservoir pressures `p_o` at the
/// inlet column and `p_i` at the outlet column.
pub fn solve_pnm_pressure(
    field: &ConductanceField,
    p_o: f64,
    p_i: f64,
    opts: SolverOptions,
) -> Result<PressureField> {
    opts.validate()?;
    if !(p_o.is_finite() && p_i.is_finite()) || p_o == p_i {
        return Err(Error::Invalid(format!(
            "reservoir pressures must be finite and distinct, got {p_o} and {p_i}"
        )));
    }
    let n = field.layout.n;
    let rows = if field.layout.dim == 1 { 1 } else { n };
    let cols = n + 1;
    let idx = |i: usize, j: usize| j * cols + i;

    let mut values = vec![0.0; cols * rows];
    let mut free = vec![false; cols * rows];
    let mut diagonal = vec![1.0; cols * rows];
    for j in 0..rows {
        values[idx(0, j)] = p_o;
        values[idx(n, j)] = p_i;
        for i in 1..n {
            free[idx(i, j)] = true;
            diagonal[idx(i, j)] = stencil(field, rows, i, j).iter().sum();
        }
    }

    // K P = -(mass balance) on interior pores, identity elsewhere
    let apply = |v: &[f64], out: &mut [f64]| {
        for j in 0..rows {
            for i in 0..cols {
                let k = idx(i, j);
                if i == 0 || i == n {
                    out[k] = v[k];
                    continue;
                }
                let [e, w, nn, s] = stencil(field, rows, i, j);
                let mut acc = e * (v[k] - v[idx(i + 1, j)]) + w * (v[k] - v[idx(i - 1, j)]);
                if rows > 1 {
                    acc += nn * (v[k] - v[idx(i, (j + 1) % rows)])
                        + s * (v[k] - v[idx(i, (j + rows - 1) % rows)]);
                }
                out[k] = acc;
            }
        }
    };
    let rhs = vec![0.0; cols * rows];
    let report = cg::solve(
        CgProblem {
            apply,
            rhs: &rhs,
            diagonal: &diagonal,
            free: Some(&free),
            constant_kernel: false,
        },
        &mut values,
        opts.tol,
        opts.cap(field.layout.sites()),
    )?;
    Ok(PressureField {
        n,
        rows,
        values,
        iterations: report.iterations,
    })
}

/// Largest absolute mass imbalance over interior pores.
pub fn pnm_residual(field: &ConductanceField, pressure: &PressureField) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..pressure.rows {
        for i in 1..pressure.n {
            worst = worst.max(mass_balance(field, pressure, i, j).abs());
        }
    }
    worst
}

/// Macroscopic permeability
/// `K*_N = N / (P_O - P_I) * |Λ_N|^-1 Σ_x a(x, x + e_1)(P(x) - P(x + e_1))`.
pub fn pnm_permeability(
    field: &ConductanceField,
    pressure: &PressureField,
    p_o: f64,
    p_i: f64,
) -> Result<f64> {
    let n = field.layout.n;
    let rows = if field.layout.dim == 1 { 1 } else { n };
    if pressure.n != n || pressure.rows != rows {
        return Err(Error::Invalid("pressure field does not match the conductance field".into()));
    }
    if p_o == p_i {
        return Err(Error::Invalid("reservoir pressures must differ".into()));
    }
    let mut sum = 0.0;
    for j in 0..rows {
        for i in 0..n {
            sum += field.get(j * n + i, 0) * (pressure.get(i, j) - pressure.get(i + 1, j));
        }
    }
    let volume = (n * rows) as f64;
    Ok(n as f64 / (p_o - p_i) * sum / volume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::corrector::{apparent_tensor_from_field, BoundaryCondition};
    use crate::forward::harmonic_mean_1d;
    use crate::microstructure::{draw_uniform_field, Layout};
    use crate::special::ThetaParams;

    const TIGHT: SolverOptions = SolverOptions {
        tol: 1e-12,
        max_iter: None,
    };

    fn weibull_field(dim: usize, n: usize, seed: u64) -> ConductanceField {
        let u = draw_uniform_field(dim, n, seed).unwrap();
        ConductanceField::weibull(&u, ThetaParams::new(1.0, 15.0).unwrap()).unwrap()
    }

    #[test]
    fn constant_field_gives_linear_profile() {
        for dim in [1, 2] {
            let n = 9;
            let f = ConductanceField::constant(Layout::new(dim, n).unwrap(), 3.0).unwrap();
            let p = solve_pnm_pressure(&f, 0.0, n as f64, TIGHT).unwrap();
            for j in 0..p.rows {
                for i in 0..=n {
                    assert!((p.get(i, j) - i as f64).abs() < 1e-10);
                }
            }
            let k = pnm_permeability(&f, &p, 0.0, n as f64).unwrap();
            assert!((k - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn linearity_in_boundary_data() {
        let f = weibull_field(2, 10, 3);
        let p1 = solve_pnm_pressure(&f, 0.0, 10.0, TIGHT).unwrap();
        let p2 = solve_pnm_pressure(&f, 0.0, 5.0, TIGHT).unwrap();
        for (a, b) in p1.values().iter().zip(p2.values()) {
            assert!((a - 2.0 * b).abs() < 1e-9);
        }
    }

    #[test]
    fn conservation_residual_and_pinned_columns() {
        let f = weibull_field(2, 16, 5);
        let tol = 1e-10;
        let p = solve_pnm_pressure(&f, 2.0, -1.0, SolverOptions::with_tol(tol)).unwrap();
        let scale = f.values().iter().cloned().fold(0.0, f64::max) * 3.0;
        assert!(pnm_residual(&f, &p) <= tol * scale);
        for j in 0..p.rows {
            assert_eq!(p.get(0, j), 2.0);
            assert_eq!(p.get(16, j), -1.0);
        }
    }

    #[test]
    fn doubling_conductances_doubles_permeability() {
        let f = weibull_field(2, 8, 6);
        let g = f.scaled(2.0).unwrap();
        let kf = pnm_permeability(&f, &solve_pnm_pressure(&f, 0.0, 8.0, TIGHT).unwrap(), 0.0, 8.0).unwrap();
        let kg = pnm_permeability(&g, &solve_pnm_pressure(&g, 0.0, 8.0, TIGHT).unwrap(), 0.0, 8.0).unwrap();
        assert!((kg - 2.0 * kf).abs() < 1e-10 * kf);
    }

    #[test]
    fn matches_reservoir_corrector() {
        for seed in 0..4 {
            let f = weibull_field(2, 12, seed);
            let p = solve_pnm_pressure(&f, 0.0, 12.0, TIGHT).unwrap();
            let k = pnm_permeability(&f, &p, 0.0, 12.0).unwrap();
            let t = apparent_tensor_from_field(&f, BoundaryCondition::Reservoir, TIGHT).unwrap();
            assert!((k - t[0]).abs() < 1e-9 * k, "seed {seed}: {k} vs {}", t[0]);
        }
    }

    #[test]
    fn one_dimensional_chain_is_harmonic_mean() {
        let f = weibull_field(1, 50, 2);
        let p = solve_pnm_pressure(&f, 1.0, 0.0, TIGHT).unwrap();
        let k = pnm_permeability(&f, &p, 1.0, 0.0).unwrap();
        let h = harmonic_mean_1d(&f).unwrap();
        assert!((k - h).abs() < 1e-9 * h);
    }

    #[test]
    fn rejects_equal_pressures() {
        let f = weibull_field(2, 4, 1);
        assert!(solve_pnm_pressure(&f, 1.0, 1.0, TIGHT).is_err());
    }
}
