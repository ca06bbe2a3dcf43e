use homfit_core::forward::mc::summarize;
use homfit_core::forward::{run_monte_carlo, BoundaryCondition, ForwardConfig};
use homfit_core::inverse::{generate_synthetic_obs, newton_fit, NewtonOptions, Objective1d, WeightField, EQUAL_WEIGHTS};
use homfit_core::microstructure::{draw_uniform_field, ConductanceField, WeibullLaw};
use homfit_core::special::{astar_closed_form, relvar_leading};
use homfit_core::ThetaParams;

#[test]
fn one_dimensional_monte_carlo_matches_closed_forms() {
    let theta = ThetaParams::new(1.0, 15.0).unwrap();
    let n = 20_000;
    let samples = run_monte_carlo(&WeibullLaw(theta), 7, 400, &ForwardConfig::new(1, n)).unwrap();
    let s = summarize(&samples).unwrap();
    let astar = astar_closed_form(theta).unwrap();
    let lead = relvar_leading(theta.k, n).unwrap();
    // standard error of the mean is sqrt(relvar / M)
    assert!((s.mean / astar - 1.0).abs() < 4.0 * (lead / 400.0).sqrt() + 2.0 * lead);
    assert!(s.relvar / lead > 0.75 && s.relvar / lead < 1.3, "{} vs {lead}", s.relvar);
}

#[test]
fn two_dimensional_samples_lie_between_harmonic_and_arithmetic_means() {
    let theta = ThetaParams::new(1.0, 15.0).unwrap();
    for bc in [BoundaryCondition::Periodic, BoundaryCondition::Dirichlet, BoundaryCondition::Reservoir] {
        let cfg = ForwardConfig { bc, ..ForwardConfig::new(2, 12) };
        for sample in run_monte_carlo(&WeibullLaw(theta), 3, 6, &cfg).unwrap() {
            let u = draw_uniform_field(2, 12, sample.seed).unwrap();
            let a = ConductanceField::weibull(&u, theta).unwrap();
            let v = a.values();
            let arith = v.iter().sum::<f64>() / v.len() as f64;
            let harm = v.len() as f64 / v.iter().map(|x| 1.0 / x).sum::<f64>();
            assert!(sample.permeability > harm && sample.permeability < arith, "{bc}: {}", sample.permeability);
        }
    }
}

#[test]
fn fit_on_one_field_recovers_reference() {
    let reference = ThetaParams::new(1.0, 15.0).unwrap();
    let u = draw_uniform_field(1, 50_000, 17).unwrap();
    let obs = generate_synthetic_obs(reference, &u).unwrap();
    let objective = Objective1d::new(WeightField::new(&u).unwrap(), obs, EQUAL_WEIGHTS).unwrap();
    let start = ThetaParams::for_inverse(1.25, 22.0).unwrap();
    let trace = newton_fit(&objective, start, &NewtonOptions::default()).unwrap();
    assert!(trace.converged);
    let t = trace.theta_opt();
    assert!((t.lambda - 1.0).abs() < 1e-8 && (t.k - 15.0).abs() < 1e-8, "{t:?}");
}
