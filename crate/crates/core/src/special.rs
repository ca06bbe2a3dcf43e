//! Gamma-family special functions and the closed-form one-dimensional
//! homogenization quantities of Weibull conductance networks.
//!
//! In one dimension the apparent conductivity of a box is the harmonic mean of
//! its conductances, so everything that only depends on `(lambda, k, n)` can
//! be written with the Euler Gamma function:
//!
//! * homogenized coefficient `A* = lambda^4 / Γ(1 - 4/k)` (needs `k > 4`);
//! * leading-order relative variance of the apparent coefficient
//!   `(ζ(k) - 1) / n` with `ζ(k) = Γ(1 - 8/k) / Γ(1 - 4/k)^2` (needs `k > 8`);
//! * the population misfit between two parameter sets, built from both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest shape parameter accepted by variance-bearing operations.
///
/// The relative variance is finite only for `k > 8`, and `ζ` blows up as
/// `k -> 8+`, so a small margin is kept.
pub const K_VARIANCE_MIN: f64 = 8.0 + 1e-3;

/// Parameters `(lambda, k)` of the Weibull law of channel radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    /// Radius scale.
    pub lambda: f64,
    /// Weibull shape.
    pub k: f64,
}

impl ThetaParams {
    /// Builds a parameter pair, checking `lambda > 0` and `k > 0`.
    pub fn new(lambda: f64, k: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::domain("theta", format!("lambda must be > 0, got {lambda}")));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::domain("theta", format!("k must be > 0, got {k}")));
        }
        Ok(Self { lambda, k })
    }

    /// Builds a parameter pair valid for the inverse problem (`k >= 8.001`).
    pub fn for_inverse(lambda: f64, k: f64) -> Result<Self> {
        let theta = Self::new(lambda, k)?;
        theta.check_inverse_domain()?;
        Ok(theta)
    }

    pub fn check_inverse_domain(&self) -> Result<()> {
        check_variance_shape("theta", self.k)
    }

    /// True when the pair lies strictly inside the inverse-problem domain.
    pub fn is_inverse_feasible(&self) -> bool {
        self.lambda.is_finite() && self.lambda > 0.0 && self.k.is_finite() && self.k >= K_VARIANCE_MIN
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.lambda, self.k]
    }
}

fn check_variance_shape(what: &'static str, k: f64) -> Result<()> {
    if !(k.is_finite() && k >= K_VARIANCE_MIN) {
        return Err(Error::domain(
            what,
            format!("shape k must be >= {K_VARIANCE_MIN} for a finite variance, got {k}"),
        ));
    }
    Ok(())
}

// Lanczos approximation, g = 7, nine coefficients.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Lanczos partial fraction `t(x) = c0 + Σ c_i / (x + i)` and its first two
/// derivatives with respect to `x`.
fn lanczos_series(x: f64) -> (f64, f64, f64) {
    let mut t = LANCZOS_COEFFS[0];
    let mut dt = 0.0;
    let mut d2t = 0.0;
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        let inv = 1.0 / (x + i as f64);
        t += c * inv;
        dt -= c * inv * inv;
        d2t += 2.0 * c * inv * inv * inv;
    }
    (t, dt, d2t)
}

fn check_gamma_arg(z: f64) -> Result<()> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::domain("gamma", format!("argument must be finite and > 0, got {z}")));
    }
    Ok(())
}

/// Euler Gamma function for `z > 0`.
///
/// Arguments below `1/2` are lifted with `Γ(z) = Γ(z + 1) / z`.
pub fn gamma(z: f64) -> Result<f64> {
    check_gamma_arg(z)?;
    Ok(gamma_unchecked(z))
}

fn gamma_unchecked(z: f64) -> f64 {
    if z < 0.5 {
        return gamma_unchecked(z + 1.0) / z;
    }
    let x = z - 1.0;
    let (t, _, _) = lanczos_series(x);
    let w = x + LANCZOS_G + 0.5;
    // split the power to postpone overflow for large z
    let p = w.powf(0.5 * (x + 0.5));
    (2.0 * std::f64::consts::PI).sqrt() * p * (p * (-w).exp()) * t
}

/// `ln Γ(z)` for `z > 0`.
pub fn ln_gamma(z: f64) -> Result<f64> {
    check_gamma_arg(z)?;
    Ok(ln_gamma_unchecked(z))
}

fn ln_gamma_unchecked(z: f64) -> f64 {
    if z < 0.5 {
        return ln_gamma_unchecked(z + 1.0) - z.ln();
    }
    let x = z - 1.0;
    let (t, _, _) = lanczos_series(x);
    let w = x + LANCZOS_G + 0.5;
    HALF_LN_TWO_PI + (x + 0.5) * w.ln() - w + t.ln()
}

/// Digamma `ψ(z) = Γ'(z)/Γ(z)`, differentiated from the same Lanczos form.
pub fn digamma(z: f64) -> Result<f64> {
    check_gamma_arg(z)?;
    Ok(digamma_unchecked(z))
}

fn digamma_unchecked(z: f64) -> f64 {
    if z < 0.5 {
        return digamma_unchecked(z + 1.0) - 1.0 / z;
    }
    let x = z - 1.0;
    let (t, dt, _) = lanczos_series(x);
    let w = x + LANCZOS_G + 0.5;
    w.ln() + (x + 0.5) / w - 1.0 + dt / t
}

/// Trigamma `ψ'(z)`.
pub fn trigamma(z: f64) -> Result<f64> {
    check_gamma_arg(z)?;
    Ok(trigamma_unchecked(z))
}

fn trigamma_unchecked(z: f64) -> f64 {
    if z < 0.5 {
        return trigamma_unchecked(z + 1.0) + 1.0 / (z * z);
    }
    let x = z - 1.0;
    let (t, dt, d2t) = lanczos_series(x);
    let w = x + LANCZOS_G + 0.5;
    let r = dt / t;
    1.0 / w + LANCZOS_G / (w * w) + d2t / t - r * r
}

/// `ζ(k) = Γ(1 - 8/k) / Γ(1 - 4/k)^2`, strictly decreasing towards 1.
pub fn zeta_ratio(k: f64) -> Result<f64> {
    check_variance_shape("zeta_ratio", k)?;
    Ok(ln_zeta(k).0.exp())
}

/// `ln ζ(k)` with its first and second derivatives in `k`.
fn ln_zeta(k: f64) -> (f64, f64, f64) {
    let a = 1.0 - 4.0 / k;
    let b = 1.0 - 8.0 / k;
    let k2 = k * k;
    let k3 = k2 * k;
    let k4 = k2 * k2;
    let q = ln_gamma_unchecked(b) - 2.0 * ln_gamma_unchecked(a);
    let (psi_a, psi_b) = (digamma_unchecked(a), digamma_unchecked(b));
    let (tri_a, tri_b) = (trigamma_unchecked(a), trigamma_unchecked(b));
    let dq = 8.0 * (psi_b - psi_a) / k2;
    let d2q = 64.0 * tri_b / k4 - 16.0 * psi_b / k3 - 32.0 * tri_a / k4 + 16.0 * psi_a / k3;
    (q, dq, d2q)
}

/// `ln Γ(1 - 4/k)` with its first and second derivatives in `k`.
fn ln_gamma_four(k: f64) -> (f64, f64, f64) {
    let a = 1.0 - 4.0 / k;
    let k2 = k * k;
    let psi = digamma_unchecked(a);
    let h = ln_gamma_unchecked(a);
    let dh = 4.0 * psi / k2;
    let d2h = 16.0 * trigamma_unchecked(a) / (k2 * k2) - 8.0 * psi / (k2 * k);
    (h, dh, d2h)
}

/// Exact homogenized coefficient of the one-dimensional network,
/// `lambda^4 / Γ(1 - 4/k)`.
pub fn astar_closed_form(theta: ThetaParams) -> Result<f64> {
    if !(theta.k > 4.0) {
        return Err(Error::domain(
            "astar_closed_form",
            format!("shape k must be > 4, got {}", theta.k),
        ));
    }
    // the physical prefactor C0 (Poiseuille: pi / 8 eta) is fixed to 1
    Ok(theta.lambda.powi(4) / gamma_unchecked(1.0 - 4.0 / theta.k))
}

/// Leading-order relative variance `(ζ(k) - 1) / n` of the apparent
/// coefficient of an `n`-edge one-dimensional box. Independent of `lambda`.
pub fn relvar_leading(k: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("relvar_leading", "box size must be >= 1"));
    }
    Ok((zeta_ratio(k)? - 1.0) / n as f64)
}

/// Value, gradient and Hessian of a two-parameter objective at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEval {
    pub value: f64,
    /// `(d/dlambda, d/dk)`.
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

impl ObjectiveEval {
    pub fn gradient_norm_inf(&self) -> f64 {
        self.gradient[0].abs().max(self.gradient[1].abs())
    }
}

/// Weighted sum of two squared residuals, assembled from residual values,
/// gradients and Hessians by the chain rule.
pub(crate) fn assemble_least_squares(
    weights: [f64; 2],
    residuals: [(f64, [f64; 2], [[f64; 2]; 2]); 2],
) -> ObjectiveEval {
    let mut value = 0.0;
    let mut gradient = [0.0; 2];
    let mut hessian = [[0.0; 2]; 2];
    for (c, (r, dr, d2r)) in weights.iter().zip(residuals.iter()) {
        value += c * r * r;
        for i in 0..2 {
            gradient[i] += 2.0 * c * r * dr[i];
            for j in 0..2 {
                hessian[i][j] += 2.0 * c * (dr[i] * dr[j] + r * d2r[i][j]);
            }
        }
    }
    hessian[1][0] = hessian[0][1];
    ObjectiveEval {
        value,
        gradient,
        hessian,
    }
}

/// Large-box limit of the misfit between the parameters `theta` and the
/// observed parameters `theta_obs`:
///
/// `(A*(θ)/A*(θ_obs) - 1)^2 + ((ζ(k) - 1)/(ζ(k_obs) - 1) - 1)^2`,
///
/// with analytic gradient and Hessian. Vanishes only at `theta_obs`.
pub fn f_infinity(theta: ThetaParams, theta_obs: ThetaParams) -> Result<ObjectiveEval> {
    theta.check_inverse_domain()?;
    theta_obs.check_inverse_domain()?;
    let ThetaParams { lambda, k } = theta;

    // permeability ratio: ratio = c lambda^4 exp(-h(k))
    let (h, dh, d2h) = ln_gamma_four(k);
    let (h_obs, _, _) = ln_gamma_four(theta_obs.k);
    let ratio = (4.0 * (lambda / theta_obs.lambda).ln() + h_obs - h).exp();
    let r1 = ratio - 1.0;
    let d_lambda = 4.0 * ratio / lambda;
    let d_k = -ratio * dh;
    let r1_terms = (
        r1,
        [d_lambda, d_k],
        [
            [12.0 * ratio / (lambda * lambda), 4.0 * d_k / lambda],
            [4.0 * d_k / lambda, ratio * (dh * dh - d2h)],
        ],
    );

    // variance ratio: depends on k only
    let (q, dq, d2q) = ln_zeta(k);
    let zeta = q.exp();
    let zeta_obs_m1 = ln_zeta(theta_obs.k).0.exp() - 1.0;
    let r2 = (zeta - 1.0) / zeta_obs_m1 - 1.0;
    let r2_terms = (
        r2,
        [0.0, zeta * dq / zeta_obs_m1],
        [[0.0, 0.0], [0.0, zeta * (dq * dq + d2q) / zeta_obs_m1]],
    );

    Ok(assemble_least_squares([1.0, 1.0], [r1_terms, r2_terms]))
}
