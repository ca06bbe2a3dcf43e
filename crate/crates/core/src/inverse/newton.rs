//! Damped Newton minimization over `theta = (lambda, k)` with an
//! Armijo/Goldstein line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ObjectiveEval, ThetaParams};

/// A twice-differentiable objective on the inverse-problem domain.
pub trait Objective {
    fn eval(&self, theta: ThetaParams) -> Result<ObjectiveEval>;
}

impl<T: Objective + ?Sized> Objective for &T {
    fn eval(&self, theta: ThetaParams) -> Result<ObjectiveEval> {
        (**self).eval(theta)
    }
}

/// Wraps a value-only objective; gradient and Hessian come from central
/// differences with relative step `rel_step` (Hessian from second
/// differences with the square root of it).
pub struct FiniteDifference<F> {
    pub value: F,
    pub rel_step: f64,
}

impl<F: Fn(ThetaParams) -> Result<f64>> Objective for FiniteDifference<F> {
    fn eval(&self, theta: ThetaParams) -> Result<ObjectiveEval> {
        let p = theta.as_array();
        let at = |q: [f64; 2]| -> Result<f64> { (self.value)(ThetaParams::new(q[0], q[1])?) };
        let h1 = [self.rel_step * p[0].abs().max(1.0), self.rel_step * p[1].abs().max(1.0)];
        let hs = self.rel_step.sqrt();
        let h2 = [hs * p[0].abs().max(1.0), hs * p[1].abs().max(1.0)];
        let shift = |h: [f64; 2], a: f64, b: f64| [p[0] + a * h[0], p[1] + b * h[1]];

        let f0 = at(p)?;
        let mut gradient = [0.0; 2];
        for i in 0..2 {
            let (a, b) = if i == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            gradient[i] = (at(shift(h1, a, b))? - at(shift(h1, -a, -b))?) / (2.0 * h1[i]);
        }
        let hxx = (at(shift(h2, 1.0, 0.0))? - 2.0 * f0 + at(shift(h2, -1.0, 0.0))?) / (h2[0] * h2[0]);
        let hyy = (at(shift(h2, 0.0, 1.0))? - 2.0 * f0 + at(shift(h2, 0.0, -1.0))?) / (h2[1] * h2[1]);
        let hxy = (at(shift(h2, 1.0, 1.0))? - at(shift(h2, 1.0, -1.0))? - at(shift(h2, -1.0, 1.0))?
            + at(shift(h2, -1.0, -1.0))?)
            / (4.0 * h2[0] * h2[1]);
        Ok(ObjectiveEval {
            value: f0,
            gradient,
            hessian: [[hxx, hxy], [hxy, hyy]],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Stop when `|grad F|_inf <= grad_tol`.
    pub grad_tol: f64,
    /// Stop when an accepted step has `|theta_{j+1} - theta_j|_inf <= step_tol`.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Always take `mu = 1` (no line search).
    pub fixed_step: bool,
    /// Sufficient-decrease factor of the Armijo rule.
    pub armijo: f64,
    pub backtrack: f64,
    pub expand: f64,
    /// Objective evaluations allowed per line search.
    pub max_trials: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            step_tol: 1e-12,
            max_iter: 100,
            fixed_step: false,
            armijo: 1e-4,
            backtrack: 0.5,
            expand: 2.0,
            max_trials: 50,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_tol >= 0.0
            && self.step_tol >= 0.0
            && self.armijo > 0.0
            && self.armijo < 0.5
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.expand > 1.0
            && self.max_trials >= 1;
        if !ok {
            return Err(Error::Invalid(format!("inconsistent Newton options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailure,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GradientTolerance => "gradient-tolerance",
            Self::StepTolerance => "step-tolerance",
            Self::MaxIterations => "max-iterations",
            Self::LineSearchFailure => "line-search-failure",
        })
    }
}

/// One accepted iterate. The first entry of a trace is the starting point,
/// with `step = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonIterate {
    pub theta: ThetaParams,
    pub value: f64,
    pub gradient_norm: f64,
    /// Step size `mu_j` that produced this iterate.
    pub step: f64,
    /// Shift added to the Hessian diagonal for the direction that produced
    /// this iterate.
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonTrace {
    pub iterates: Vec<NewtonIterate>,
    pub converged: bool,
    pub reason: StopReason,
}

impl NewtonTrace {
    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn last(&self) -> &NewtonIterate {
        self.iterates.last().expect("a trace holds at least its starting point")
    }

    pub fn theta_opt(&self) -> ThetaParams {
        self.last().theta
    }
}

/// Summary of one fit, as written to result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub theta0: ThetaParams,
    pub theta_opt: ThetaParams,
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    pub value: f64,
    pub gradient_norm: f64,
    pub seed: u64,
    pub n: usize,
}

impl FitRecord {
    pub fn from_trace(trace: &NewtonTrace, seed: u64, n: usize) -> Self {
        let last = trace.last();
        Self {
            theta0: trace.iterates[0].theta,
            theta_opt: last.theta,
            iterations: trace.iterations(),
            converged: trace.converged,
            reason: trace.reason,
            value: last.value,
            gradient_norm: last.gradient_norm,
            seed,
            n,
        }
    }
}

/// Smallest eigenvalue of a symmetric 2x2 matrix.
fn min_eigenvalue(h: &[[f64; 2]; 2]) -> f64 {
    let half_tr = 0.5 * (h[0][0] + h[1][1]);
    let half_diff = 0.5 * (h[0][0] - h[1][1]);
    half_tr - (half_diff * half_diff + h[0][1] * h[0][1]).sqrt()
}

/// Newton direction `-(H + tau I)^-1 g`, with `tau = 0` when `H` is safely
/// positive definite and otherwise raised tenfold from a small multiple of
/// the Hessian scale until it is.
fn newton_direction(e: &ObjectiveEval) -> Result<([f64; 2], f64)> {
    let h = e.hessian;
    let scale = h[0][0].abs().max(h[1][1].abs()).max(h[0][1].abs()).max(f64::MIN_POSITIVE);
    let positive = |tau: f64| {
        let shifted = [[h[0][0] + tau, h[0][1]], [h[1][0], h[1][1] + tau]];
        let trace = shifted[0][0] + shifted[1][1];
        min_eigenvalue(&shifted) > 1e-10 * trace && trace > 0.0
    };
    let mut tau = 0.0;
    if !positive(0.0) {
        tau = 1e-10 * scale;
        while !positive(tau) {
            tau *= 10.0;
            if !tau.is_finite() {
                return Err(Error::Invalid("Hessian could not be regularized".into()));
            }
        }
    }
    let (a, b, d) = (h[0][0] + tau, h[0][1], h[1][1] + tau);
    let det = a * d - b * b;
    let g = e.gradient;
    let dir = [-(d * g[0] - b * g[1]) / det, -(a * g[1] - b * g[0]) / det];
    if !(dir[0].is_finite() && dir[1].is_finite()) {
        return Err(Error::Invalid(format!("Newton direction is not finite at Hessian {h:?}")));
    }
    Ok((dir, tau))
}

enum Trial {
    Accepted(ThetaParams, ObjectiveEval),
    Rejected,
}

fn try_point<O: Objective + ?Sized>(objective: &O, p: [f64; 2]) -> Trial {
    let Ok(theta) = ThetaParams::new(p[0], p[1]) else {
        return Trial::Rejected;
    };
    if !theta.is_inverse_feasible() {
        return Trial::Rejected;
    }
    match objective.eval(theta) {
        Ok(e) if e.value.is_finite() => Trial::Accepted(theta, e),
        _ => Trial::Rejected,
    }
}

/// Minimizes `objective` from `theta0`.
///
/// Iterates `theta_{j+1} = theta_j + mu_j d_j` along the (damped) Newton
/// direction. Unless `fixed_step` is set, `mu_j` starts at 1, is halved until
/// the step stays feasible and satisfies the Armijo condition, and is
/// doubled while a first-try acceptance keeps improving the value.
pub fn newton_fit<O: Objective + ?Sized>(
    objective: &O,
    theta0: ThetaParams,
    opts: &NewtonOptions,
) -> Result<NewtonTrace> {
    opts.validate()?;
    theta0.check_inverse_domain()?;
    let mut theta = theta0;
    let mut e = objective.eval(theta)?;
    let mut iterates = vec![NewtonIterate {
        theta,
        value: e.value,
        gradient_norm: e.gradient_norm_inf(),
        step: 0.0,
        damping: 0.0,
    }];
    let finish = |iterates: Vec<NewtonIterate>, reason: StopReason| NewtonTrace {
        iterates,
        converged: matches!(reason, StopReason::GradientTolerance | StopReason::StepTolerance),
        reason,
    };

    for _ in 0..opts.max_iter {
        if e.gradient_norm_inf() <= opts.grad_tol {
            return Ok(finish(iterates, StopReason::GradientTolerance));
        }
        let (dir, damping) = newton_direction(&e)?;
        let slope = dir[0] * e.gradient[0] + dir[1] * e.gradient[1];
        let p = theta.as_array();
        let at = |mu: f64| [p[0] + mu * dir[0], p[1] + mu * dir[1]];
        let armijo_ok = |mu: f64, value: f64| value <= e.value + opts.armijo * mu * slope;

        let mut accepted: Option<(f64, ThetaParams, ObjectiveEval)> = None;
        if opts.fixed_step {
            if let Trial::Accepted(t, te) = try_point(objective, at(1.0)) {
                accepted = Some((1.0, t, te));
            }
        } else {
            let mut mu = 1.0;
            let mut trials = 0;
            while trials < opts.max_trials {
                trials += 1;
                match try_point(objective, at(mu)) {
                    Trial::Accepted(t, te) if armijo_ok(mu, te.value) => {
                        accepted = Some((mu, t, te));
                        break;
                    }
                    _ => mu *= opts.backtrack,
                }
            }
            if let Some((1.0, _, _)) = accepted {
                // Goldstein-style expansion after a first-try acceptance
                while trials < opts.max_trials {
                    trials += 1;
                    let (best_mu, _, best) = accepted.unwrap();
                    let mu = best_mu * opts.expand;
                    match try_point(objective, at(mu)) {
                        Trial::Accepted(t, te) if armijo_ok(mu, te.value) && te.value < best.value => {
                            accepted = Some((mu, t, te));
                        }
                        _ => break,
                    }
                }
            }
        }

        let Some((mu, next, next_e)) = accepted else {
            return Ok(finish(iterates, StopReason::LineSearchFailure));
        };
        let step = (next.lambda - theta.lambda).abs().max((next.k - theta.k).abs());
        theta = next;
        e = next_e;
        iterates.push(NewtonIterate {
            theta,
            value: e.value,
            gradient_norm: e.gradient_norm_inf(),
            step: mu,
            damping,
        });
        if step <= opts.step_tol {
            return Ok(finish(iterates, StopReason::StepTolerance));
        }
    }
    let reason = if e.gradient_norm_inf() <= opts.grad_tol {
        StopReason::GradientTolerance
    } else {
        StopReason::MaxIterations
    };
    Ok(finish(iterates, reason))
}
