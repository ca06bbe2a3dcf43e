//! Corrector problems on finite boxes and the apparent homogenized tensor.
//!
//! The corrector `φ_ξ` solves `∇*[A(ξ + ∇φ_ξ)] = 0` on the box, with
//!
//! * `Periodic`: `φ` periodic on the `n^d` torus, pinned by `φ(0) = 0`;
//! * `Dirichlet`: `φ = 0` on the boundary of `{0..n}^d`;
//! * `Reservoir`: `φ = 0` on the inlet/outlet columns `x_0 = 0` and `x_0 = n`,
//!   periodic in the transverse direction (the pore-network setting).
//!
//! The apparent tensor is the box average of the flux,
//! `A*_N ξ = |Λ_N|^-1 Σ_x A(x)(ξ + ∇φ_ξ(x))`.

use serde::{Deserialize, Serialize};

use super::cg::{self, CgProblem};
use crate::error::{Error, Result};
use crate::microstructure::ConductanceField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Periodic,
    Dirichlet,
    /// Pinned inlet and outlet columns, periodic transverse direction.
    Reservoir,
}

impl BoundaryCondition {
    fn pinned_axis(&self, axis: usize) -> bool {
        match self {
            BoundaryCondition::Periodic => false,
            BoundaryCondition::Dirichlet => true,
            BoundaryCondition::Reservoir => axis == 0,
        }
    }
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Self::Periodic),
            "dirichlet" => Ok(Self::Dirichlet),
            "pnm" | "reservoir" => Ok(Self::Reservoir),
            other => Err(Error::Invalid(format!("unknown boundary condition '{other}'"))),
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Periodic => "periodic",
            Self::Dirichlet => "dirichlet",
            Self::Reservoir => "pnm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual `|b - Kφ| / |b|`.
    pub tol: f64,
    /// Iteration cap; `None` means `50 * sqrt(n^d)`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, max_iter: None }
    }

    pub(crate) fn cap(&self, sites: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| (50.0 * (sites as f64).sqrt()).ceil() as usize)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Invalid(format!("solver tolerance must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    tail: usize,
    head: usize,
    axis: usize,
    a: f64,
}

/// Node grid and edge list of a box under a boundary condition.
///
/// Periodic axes have `n` node layers, pinned axes `n + 1` (coordinates `0`
/// and `n` pinned). Edges are `(x, x + e_i)` for every site `x` in
/// `{0..n-1}^d`, carrying the conductance stored at `(x, i)`.
#[derive(Debug, Clone)]
pub struct BoxOperator {
    pub dim: usize,
    pub n: usize,
    pub bc: BoundaryCondition,
    extent: [usize; 2],
    stride: [usize; 2],
    edges: Vec<Edge>,
    free: Vec<bool>,
    diagonal: Vec<f64>,
}

impl BoxOperator {
    pub fn new(field: &ConductanceField, bc: BoundaryCondition) -> Self {
        let dim = field.layout.dim;
        let n = field.layout.n;
        let mut extent = [1usize; 2];
        for (axis, e) in extent.iter_mut().enumerate().take(dim) {
            *e = if bc.pinned_axis(axis) { n + 1 } else { n };
        }
        let stride = [1, extent[0]];
        let nodes = extent[0] * extent[1];

        let mut free = vec![true; nodes];
        for (node, f) in free.iter_mut().enumerate() {
            let c = [node % extent[0], node / extent[0]];
            *f = !(0..dim).any(|axis| bc.pinned_axis(axis) && (c[axis] == 0 || c[axis] == n));
        }

        let sites = field.layout.sites();
        let mut edges = Vec::with_capacity(dim * sites);
        for axis in 0..dim {
            for site in 0..sites {
                let x = [site % n, site / n];
                let mut y = x;
                y[axis] += 1;
                if !bc.pinned_axis(axis) {
                    y[axis] %= n;
                }
                edges.push(Edge {
                    tail: x[0] * stride[0] + x[1] * stride[1],
                    head: y[0] * stride[0] + y[1] * stride[1],
                    axis,
                    a: field.get(site, axis),
                });
            }
        }

        let mut diagonal = vec![0.0; nodes];
        for e in &edges {
            if e.tail != e.head {
                diagonal[e.tail] += e.a;
                diagonal[e.head] += e.a;
            }
        }

        Self {
            dim,
            n,
            bc,
            extent,
            stride,
            edges,
            free,
            diagonal,
        }
    }

    pub fn nodes(&self) -> usize {
        self.free.len()
    }

    pub fn node_index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(self.stride).map(|(c, s)| c * s).sum()
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent[..self.dim]
    }

    pub fn is_pinned(&self, node: usize) -> bool {
        !self.free[node]
    }

    /// `(K u)(x) = Σ_{edges at x} a (u(x) - u(neighbour))`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for e in &self.edges {
            let flux = e.a * (u[e.tail] - u[e.head]);
            out[e.tail] += flux;
            out[e.head] -= flux;
        }
    }

    /// Right-hand side `-∇*(A ξ)`: each edge pushes `a ξ_i` out of its tail.
    pub fn source(&self, xi: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.nodes()];
        for e in &self.edges {
            let s = e.a * xi[e.axis];
            b[e.tail] += s;
            b[e.head] -= s;
        }
        b
    }

    /// `∇*[A(ξ + ∇u)]` at every node (zero on pinned nodes).
    pub fn divergence_residual(&self, u: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut ku = vec![0.0; self.nodes()];
        self.apply(u, &mut ku);
        let b = self.source(xi);
        b.iter()
            .zip(&ku)
            .zip(&self.free)
            .map(|((bi, ki), f)| if *f { bi - ki } else { 0.0 })
            .collect()
    }

    /// Box-averaged flux `|Λ_N|^-1 Σ A(ξ + ∇u)`, one component per axis.
    pub fn mean_flux(&self, u: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut flux = vec![0.0; self.dim];
        for e in &self.edges {
            flux[e.axis] += e.a * (xi[e.axis] + u[e.head] - u[e.tail]);
        }
        let volume = self.n.pow(self.dim as u32) as f64;
        flux.iter_mut().for_each(|f| *f /= volume);
        flux
    }

    /// Solves `∇*[A(ξ + ∇u)] = 0` on free nodes; `u` carries the pinned
    /// values on entry.
    pub(crate) fn solve(&self, xi: &[f64], u: &mut [f64], opts: SolverOptions) -> Result<cg::CgReport> {
        let rhs = self.source(xi);
        let periodic = self.bc == BoundaryCondition::Periodic;
        cg::solve(
            CgProblem {
                apply: |v: &[f64], out: &mut [f64]| self.apply(v, out),
                rhs: &rhs,
                diagonal: &self.diagonal,
                free: if periodic { None } else { Some(&self.free) },
                constant_kernel: periodic,
            },
            u,
            opts.tol,
            opts.cap(self.n.pow(self.dim as u32)),
        )
    }
}

/// Solution of one corrector problem, as node values of the box grid.
#[derive(Debug, Clone)]
pub struct Corrector {
    pub xi: Vec<f64>,
    pub bc: BoundaryCondition,
    /// Node values, indexed like [`BoxOperator::node_index`].
    pub values: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn check_direction(field: &ConductanceField, xi: &[f64]) -> Result<()> {
    if xi.len() != field.layout.dim || xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!(
            "direction must have {} finite components, got {xi:?}",
            field.layout.dim
        )));
    }
    Ok(())
}

/// Solves the corrector problem in direction `xi`.
///
/// Periodic correctors are normalized by `φ(0) = 0`.
pub fn solve_corrector(
    field: &ConductanceField,
    xi: &[f64],
    bc: BoundaryCondition,
    opts: SolverOptions,
) -> Result<Corrector> {
    check_direction(field, xi)?;
    opts.validate()?;
    let op = BoxOperator::new(field, bc);
    let mut values = vec![0.0; op.nodes()];
    let report = op.solve(xi, &mut values, opts)?;
    if bc == BoundaryCondition::Periodic {
        let origin = values[0];
        values.iter_mut().for_each(|v| *v -= origin);
    }
    Ok(Corrector {
        xi: xi.to_vec(),
        bc,
        values,
        iterations: report.iterations,
        relative_residual: report.relative_residual,
    })
}

/// Apparent tensor `A*_N` from one corrector per unit direction, in axis
/// order. Entry `(i, j)` is the mean flux along axis `i` for `ξ = e_j`.
pub fn apparent_tensor(field: &ConductanceField, correctors: &[Corrector]) -> Result<Vec<f64>> {
    let dim = field.layout.dim;
    if correctors.len() != dim {
        return Err(Error::Invalid(format!(
            "need {dim} correctors, got {}",
            correctors.len()
        )));
    }
    let bc = correctors[0].bc;
    let op = BoxOperator::new(field, bc);
    let mut tensor = vec![0.0; dim * dim];
    for (j, c) in correctors.iter().enumerate() {
        let unit: Vec<f64> = (0..dim).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
        if c.bc != bc || c.xi != unit || c.values.len() != op.nodes() {
            return Err(Error::Invalid(format!(
                "corrector {j} does not match unit direction e_{j} on this box"
            )));
        }
        let flux = op.mean_flux(&c.values, &unit);
        for i in 0..dim {
            tensor[i * dim + j] = flux[i];
        }
    }
    Ok(tensor)
}

/// Solves all unit-direction correctors and returns the apparent tensor.
pub fn apparent_tensor_from_field(
    field: &ConductanceField,
    bc: BoundaryCondition,
    opts: SolverOptions,
) -> Result<Vec<f64>> {
    let dim = field.layout.dim;
    let correctors = (0..dim)
        .map(|j| {
            let unit: Vec<f64> = (0..dim).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            solve_corrector(field, &unit, bc, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    apparent_tensor(field, &correctors)
}
