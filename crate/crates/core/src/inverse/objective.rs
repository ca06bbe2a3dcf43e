//! Least-squares misfits between model and observed macroscopic quantities.
//!
//! In one dimension a realization is summarized by the variables
//! `w_i(k) = (-ln(1 - u_i))^(-1/k)`, and with
//!
//! ```text
//! f(lambda, k) = lambda^4 / Σ w_i^4
//! g(k)         = Σ w_i^8 / (Σ w_i^4)^2
//! ```
//!
//! the apparent permeability is `N f` and the relative-variance proxy is
//! `s_n = g - 1/N`. All derivatives follow from the power sums
//! `S_p = Σ w^p`, `T_p = Σ ln(w) w^p`, `Q_p = Σ ln(w)^2 w^p` for `p = 4, 8`,
//! using `d(ln w)/dk = -ln(w)/k`.

use super::newton::Objective;
use super::{check_weights, Observations};
use crate::error::{Error, Result};
use crate::forward::{mc::summarize, run_monte_carlo, ForwardConfig};
use crate::microstructure::{UniformField, WeibullLaw};
use crate::special::{assemble_least_squares, f_infinity, ObjectiveEval, ThetaParams};

/// Precomputed `ln(-ln(1 - u_i))` of a 1D uniform field, so that
/// `ln w_i(k) = -ln_e_i / k` for any `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    ln_e: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PowerSums {
    pub s4: f64,
    pub s8: f64,
    pub t4: f64,
    pub t8: f64,
    pub q4: f64,
    pub q8: f64,
}

impl WeightField {
    pub fn new(uniform: &UniformField) -> Result<Self> {
        if uniform.layout.dim != 1 {
            return Err(Error::Invalid(format!(
                "the 1D objective needs a 1D field, got dimension {}",
                uniform.layout.dim
            )));
        }
        let ln_e = uniform.values().iter().map(|&u| (-(-u).ln_1p()).ln()).collect();
        Ok(Self {
            ln_e,
            seed: uniform.seed,
        })
    }

    pub fn len(&self) -> usize {
        self.ln_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_e.is_empty()
    }

    pub(crate) fn power_sums(&self, k: f64) -> Result<PowerSums> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::domain("aux_fg", format!("shape must be > 0, got {k}")));
        }
        let mut s = PowerSums {
            s4: 0.0,
            s8: 0.0,
            t4: 0.0,
            t8: 0.0,
            q4: 0.0,
            q8: 0.0,
        };
        for &le in &self.ln_e {
            let l = -le / k;
            let w4 = (4.0 * l).exp();
            let w8 = w4 * w4;
            s.s4 += w4;
            s.s8 += w8;
            s.t4 += l * w4;
            s.t8 += l * w8;
            s.q4 += l * l * w4;
            s.q8 += l * l * w8;
        }
        let all = [s.s4, s.s8, s.t4, s.t8, s.q4, s.q8];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow(format!(
                "w^8 power sums are not finite at k = {k}; the shape is too small for this field"
            )));
        }
        Ok(s)
    }

    /// `f`, `g`, `s_n` and their derivatives at `theta`.
    pub fn aux_fg(&self, theta: ThetaParams) -> Result<AuxFg> {
        if self.is_empty() {
            return Err(Error::Invalid("empty field".into()));
        }
        let ThetaParams { lambda, k } = theta;
        let PowerSums { s4, s8, t4, t8, q4, q8 } = self.power_sums(k)?;
        let l4 = lambda.powi(4);
        let k2 = k * k;

        let f = l4 / s4;
        let df_dk = 4.0 * l4 * t4 / (k * s4 * s4);
        let d2f_dk2 = -8.0 * l4 * (t4 + 2.0 * q4) / (k2 * s4 * s4) + 32.0 * l4 * t4 * t4 / (k2 * s4 * s4 * s4);

        let g = s8 / (s4 * s4);
        let dg = 8.0 / k * (s8 * t4 / (s4 * s4 * s4) - t8 / (s4 * s4));
        let d2g = 16.0 / k2
            * ((t8 + 4.0 * q8) / (s4 * s4) - (s8 * t4 + 2.0 * s8 * q4 + 8.0 * t8 * t4) / (s4 * s4 * s4)
                + 6.0 * s8 * t4 * t4 / (s4 * s4 * s4 * s4));

        Ok(AuxFg {
            f,
            g,
            s_n: g - 1.0 / self.len() as f64,
            df_dlambda: 4.0 / lambda * f,
            df_dk,
            d2f_dlambda2: 12.0 / (lambda * lambda) * f,
            d2f_dk2,
            d2f_dlambda_dk: 4.0 / lambda * df_dk,
            dg,
            d2g,
        })
    }
}

/// `f`, `g` and `s_n = g - 1/N` with every partial derivative needed by
/// Newton's method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxFg {
    pub f: f64,
    pub g: f64,
    pub s_n: f64,
    pub df_dlambda: f64,
    pub df_dk: f64,
    pub d2f_dlambda2: f64,
    pub d2f_dk2: f64,
    pub d2f_dlambda_dk: f64,
    pub dg: f64,
    pub d2g: f64,
}

/// [`WeightField::aux_fg`] on a uniform field.
pub fn aux_fg(theta: ThetaParams, uniform: &UniformField) -> Result<AuxFg> {
    WeightField::new(uniform)?.aux_fg(theta)
}

/// Observations synthesized from one field at `theta_ref`:
/// `K_obs = N f(theta_ref)` and `S_obs = s_n(k_ref)`.
pub fn generate_synthetic_obs(theta_ref: ThetaParams, uniform: &UniformField) -> Result<Observations> {
    theta_ref.check_inverse_domain()?;
    let field = WeightField::new(uniform)?;
    synthetic_obs(theta_ref, &field)
}

pub(crate) fn synthetic_obs(theta_ref: ThetaParams, field: &WeightField) -> Result<Observations> {
    let aux = field.aux_fg(theta_ref)?;
    let n = field.len();
    if !(aux.s_n > 0.0) {
        return Err(Error::DegenerateField(format!(
            "synthetic relative variance is {} (field too homogeneous)",
            aux.s_n
        )));
    }
    Observations::new(n as f64 * aux.f, aux.s_n, n)
}

/// Misfit `c1 (N f / K_obs - 1)^2 + c2 (s_n / S_obs - 1)^2` on a fixed 1D
/// realization.
#[derive(Debug, Clone)]
pub struct Objective1d {
    pub field: WeightField,
    pub obs: Observations,
    pub weights: [f64; 2],
}

impl Objective1d {
    pub fn new(field: WeightField, obs: Observations, weights: [f64; 2]) -> Result<Self> {
        check_weights(weights)?;
        Ok(Self { field, obs, weights })
    }
}

impl Objective for Objective1d {
    fn eval(&self, theta: ThetaParams) -> Result<ObjectiveEval> {
        theta.check_inverse_domain()?;
        let a = self.field.aux_fg(theta)?;
        let c = self.field.len() as f64 / self.obs.k_obs;
        let s = self.obs.s_obs;
        let r1 = (
            c * a.f - 1.0,
            [c * a.df_dlambda, c * a.df_dk],
            [
                [c * a.d2f_dlambda2, c * a.d2f_dlambda_dk],
                [c * a.d2f_dlambda_dk, c * a.d2f_dk2],
            ],
        );
        let r2 = (a.s_n / s - 1.0, [0.0, a.dg / s], [[0.0, 0.0], [0.0, a.d2g / s]]);
        Ok(assemble_least_squares(self.weights, [r1, r2]))
    }
}

/// Equal-weight 1D misfit at `theta` for the realization `uniform`.
pub fn objective_1d(theta: ThetaParams, uniform: &UniformField, obs: Observations) -> Result<ObjectiveEval> {
    Objective1d::new(WeightField::new(uniform)?, obs, super::EQUAL_WEIGHTS)?.eval(theta)
}

/// Monte-Carlo misfit `(mean / K_obs - 1)^2 + (relvar / S_obs - 1)^2` over
/// `m` realizations seeded from `base_seed`. Value only.
pub fn objective_nm(
    theta: ThetaParams,
    base_seed: u64,
    m: usize,
    cfg: &ForwardConfig,
    obs: Observations,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let samples = run_monte_carlo(&WeibullLaw(theta), base_seed, m, cfg)?;
    misfit_of_samples(&samples, obs)
}

pub(crate) fn misfit_of_samples(samples: &[crate::forward::ApparentSample], obs: Observations) -> Result<f64> {
    let s = summarize(samples)?;
    Ok((s.mean / obs.k_obs - 1.0).powi(2) + (s.relvar / obs.s_obs - 1.0).powi(2))
}

/// The large-box limit misfit against fixed observed parameters.
#[derive(Debug, Clone, Copy)]
pub struct FInfinity {
    pub theta_obs: ThetaParams,
}

impl Objective for FInfinity {
    fn eval(&self, theta: ThetaParams) -> Result<ObjectiveEval> {
        f_infinity(theta, self.theta_obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::realization;
    use crate::microstructure::{draw_uniform_field, ConstantLaw, Layout, CounterRng};
    use crate::oracle;

    fn theta(l: f64, k: f64) -> ThetaParams {
        ThetaParams::new(l, k).unwrap()
    }

    fn field(n: usize, seed: u64) -> WeightField {
        WeightField::new(&draw_uniform_field(1, n, seed).unwrap()).unwrap()
    }

    /// `20` feasible points in `[0.8, 1.3] x [12, 25]`.
    fn random_points(seed: u64) -> Vec<[f64; 2]> {
        let rng = CounterRng::new(seed);
        (0..20)
            .map(|i| [0.8 + 0.5 * rng.open_unit_at(2 * i), 12.0 + 13.0 * rng.open_unit_at(2 * i + 1)])
            .collect()
    }

    #[test]
    fn unit_weights_kill_log_sums() {
        let u = 1.0 - (-1.0f64).exp();
        let n = 8;
        let uf = UniformField::from_values(Layout::new(1, n).unwrap(), 0, vec![u; n]).unwrap();
        let a = aux_fg(theta(1.3, 15.0), &uf).unwrap();
        assert!((a.f - 1.3f64.powi(4) / n as f64).abs() < 1e-15);
        assert!((a.g - 1.0 / n as f64).abs() < 1e-16);
        assert!(a.s_n.abs() < 1e-16);
        assert!(a.dg.abs() < 1e-15 && a.df_dk.abs() < 1e-15);
        assert!(matches!(generate_synthetic_obs(theta(1.0, 15.0), &uf), Err(Error::DegenerateField(_))));
    }

    #[test]
    fn lambda_identities_hold() {
        let rng = CounterRng::new(3);
        for i in 0..50 {
            let t = theta(0.5 + rng.open_unit_at(2 * i), 9.0 + 30.0 * rng.open_unit_at(2 * i + 1));
            let a = field(200, i).aux_fg(t).unwrap();
            assert!((a.df_dlambda - 4.0 / t.lambda * a.f).abs() <= 1e-15 * a.df_dlambda.abs());
            assert!((a.d2f_dlambda_dk - 4.0 / t.lambda * a.df_dk).abs() <= 1e-15 * a.d2f_dlambda_dk.abs());
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let w = field(1000, 17);
        let aux = |p: [f64; 2]| w.aux_fg(theta(p[0], p[1])).unwrap();
        for p in random_points(5) {
            let a = aux(p);
            let f_grad = oracle::central_gradient(&|q| aux(q).f, p, 1e-6);
            let f_hess = oracle::central_jacobian(&|q| [aux(q).df_dlambda, aux(q).df_dk], p, 1e-6);
            let g_grad = oracle::central_gradient(&|q| aux(q).g, p, 1e-6);
            let dg_grad = oracle::central_gradient(&|q| aux(q).dg, p, 1e-6);
            let pairs = [
                (a.df_dlambda, f_grad[0]),
                (a.df_dk, f_grad[1]),
                (a.d2f_dlambda2, f_hess[0][0]),
                (a.d2f_dlambda_dk, f_hess[1][0]),
                (a.d2f_dk2, f_hess[1][1]),
                (a.dg, g_grad[1]),
                (a.d2g, dg_grad[1]),
            ];
            for (i, (exact, fd)) in pairs.iter().enumerate() {
                assert!(oracle::close(*exact, *fd, 1e-5, 1e-12), "entry {i} at {p:?}: {exact} vs {fd}");
            }
            assert!(g_grad[0].abs() < 1e-12);
        }
    }

    #[test]
    fn second_derivative_of_g_matches_expanded_form() {
        let w = field(500, 8);
        for k in [9.0, 15.0, 16.5, 40.0] {
            let PowerSums { s4, s8, t4, t8, q4, q8 } = w.power_sums(k).unwrap();
            let k2 = k * k;
            let first = 16.0 / k2 / (s4 * s4) * ((t8 + 4.0 * q8) - s8 / s4 * (t4 + 2.0 * q4));
            let second = 32.0 / k2 / (s4 * s4 * s4) * (4.0 * t8 * t4 - 3.0 * t4 * t4 * s8 / s4);
            let d2g = w.aux_fg(theta(1.0, k)).unwrap().d2g;
            assert!(oracle::close(d2g, first - second, 1e-12, 0.0), "{d2g} vs {}", first - second);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let w = field(10, 1);
        assert!(matches!(w.power_sums(1e-3), Err(Error::Overflow(_))));
    }

    #[test]
    fn objective_vanishes_at_synthetic_reference() {
        let u = draw_uniform_field(1, 2000, 4).unwrap();
        let t = theta(1.0, 15.0);
        let obs = generate_synthetic_obs(t, &u).unwrap();
        let e = objective_1d(t, &u, obs).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.gradient, [0.0, 0.0]);
        assert!(objective_1d(theta(1.1, 16.5), &u, obs).unwrap().value > 0.0);
        assert!(objective_1d(theta(1.0, 8.0), &u, obs).is_err());
    }

    #[test]
    fn objective_derivatives_match_finite_differences() {
        let u = draw_uniform_field(1, 1000, 21).unwrap();
        let obs = generate_synthetic_obs(theta(1.0, 15.0), &u).unwrap();
        let obj = Objective1d::new(WeightField::new(&u).unwrap(), obs, [1.0, 1.0]).unwrap();
        let value = |p: [f64; 2]| obj.eval(theta(p[0], p[1])).unwrap().value;
        let grad = |p: [f64; 2]| obj.eval(theta(p[0], p[1])).unwrap().gradient;
        for p in random_points(9) {
            let e = obj.eval(theta(p[0], p[1])).unwrap();
            let g = oracle::central_gradient(&value, p, 1e-6);
            let h = oracle::richardson_jacobian(&grad, p, 1e-4);
            for i in 0..2 {
                assert!(oracle::close(e.gradient[i], g[i], 1e-5, 1e-12), "grad {i} at {p:?}");
                for j in 0..2 {
                    assert!(oracle::close(e.hessian[i][j], h[i][j], 1e-5, 1e-12), "hess {i}{j} at {p:?}: {} vs {}", e.hessian[i][j], h[i][j]);
                }
            }
        }
    }

    #[test]
    fn synthetic_obs_match_closed_forms() {
        let n = 100_000;
        let t = theta(1.0, 15.0);
        let u = draw_uniform_field(1, n, 99).unwrap();
        let obs = generate_synthetic_obs(t, &u).unwrap();
        let astar = crate::special::astar_closed_form(t).unwrap();
        let rv = crate::special::relvar_leading(15.0, n).unwrap();
        assert!((obs.k_obs - astar).abs() < 3.0 * astar * rv.sqrt());
        // spread of s_n across independent fields
        let s: Vec<f64> = (0..200)
            .map(|m| field(n, 1000 + m).aux_fg(t).unwrap().s_n)
            .collect();
        let sd = oracle::sample_variance(&s).sqrt();
        assert!((obs.s_obs - rv).abs() < 3.0 * sd, "{} vs {rv} (sd {sd})", obs.s_obs);
    }

    #[test]
    fn permeability_term_matches_forward_pipeline() {
        let n = 5000;
        let t = theta(1.2, 14.0);
        let w = field(n, 12);
        let cfg = ForwardConfig::new(1, n);
        let sample = realization(&WeibullLaw(t), 12, &cfg).unwrap();
        let nf = n as f64 * w.aux_fg(t).unwrap().f;
        assert!(oracle::close(sample.permeability, nf, 1e-12, 0.0));
    }

    #[test]
    fn monte_carlo_objective_properties() {
        let cfg = ForwardConfig::new(1, 500);
        let obs = Observations::new(1.2, 1e-3, 500).unwrap();
        let a = objective_nm(theta(1.0, 15.0), 5, 6, &cfg, obs).unwrap();
        let b = objective_nm(theta(1.0, 15.0), 5, 6, &cfg, obs).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(objective_nm(theta(1.0, 15.0), 5, 1, &cfg, obs).is_err());

        let constant = run_monte_carlo(&ConstantLaw(2.0), 1, 4, &cfg).unwrap();
        let obs = Observations::new(2.0, f64::MIN_POSITIVE, 500).unwrap();
        assert_eq!(misfit_of_samples(&constant, obs).unwrap(), 1.0);
    }
}
