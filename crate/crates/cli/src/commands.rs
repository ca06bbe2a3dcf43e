//! Drivers behind each subcommand. Every driver writes its files under
//! `cfg.out` and returns a short human-readable summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use homfit_core::forward::mc::summarize;
use homfit_core::forward::{
    mc_summary, realization_seed, run_monte_carlo, write_samples_csv, ForwardConfig, McSummary,
};
use homfit_core::inverse::objective::Objective1d;
use homfit_core::inverse::{
    generate_synthetic_obs, newton_fit, FitRecord, NewtonOptions, Observations, WeightField,
};
use homfit_core::microstructure::{draw_uniform_field, ConstantLaw, MicroLaw, WeibullLaw};
use homfit_core::special::{astar_closed_form, relvar_leading, K_VARIANCE_MIN};
use homfit_core::ThetaParams;

use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::histogram::{histogram, write_histograms_csv};

/// Runs `f` on a pool of `threads` workers (all cores when `None`).
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn create(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(&cfg.out)?;
    let mut w = BufWriter::new(File::create(cfg.out.join(name))?);
    w.write_all(cfg.header().as_bytes())?;
    Ok(w)
}

pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    with_pool(cfg.threads, || match cfg.command {
        Command::Forward => run_forward(cfg),
        Command::Fit => run_fit(cfg),
        Command::ExperimentRobustness => run_experiment_robustness(cfg),
        Command::ExperimentNoise => run_experiment_noise(cfg),
        Command::ConvergenceStudy => run_convergence_study(cfg),
    })?
}

fn law(cfg: &RunConfig) -> Box<dyn MicroLaw> {
    match cfg.constant {
        Some(a) => Box::new(ConstantLaw(a)),
        None => Box::new(WeibullLaw(cfg.theta)),
    }
}

fn forward_config(cfg: &RunConfig, n: usize) -> ForwardConfig {
    ForwardConfig {
        dim: cfg.dim,
        n,
        bc: cfg.bc,
        solver: cfg.solver,
    }
}

/// `forward`: `forward_samples.csv` and `forward_summary.csv`.
pub fn run_forward(cfg: &RunConfig) -> Result<String, CliError> {
    let law = law(cfg);
    let samples = run_monte_carlo(law.as_ref(), cfg.seed, cfg.m, &forward_config(cfg, cfg.n))?;
    let summary = summarize(&samples)?;

    let mut w = create(cfg, "forward_samples.csv")?;
    write_samples_csv(&mut w, &samples)?;
    w.flush()?;

    let mut w = create(cfg, "forward_summary.csv")?;
    writeln!(w, "m,n,dim,bc,mean,relvar")?;
    writeln!(w, "{},{},{},{},{},{}", summary.m, summary.n, cfg.dim, cfg.bc, summary.mean, summary.relvar)?;
    w.flush()?;
    Ok(format!(
        "forward: M = {}, N = {}, d = {}: mean = {:.10e}, relvar = {:.6e}",
        summary.m, summary.n, cfg.dim, summary.mean, summary.relvar
    ))
}

fn fit_on_field(
    field: WeightField,
    obs: Observations,
    theta0: ThetaParams,
    newton: &NewtonOptions,
    weights: [f64; 2],
) -> Result<homfit_core::inverse::NewtonTrace, CliError> {
    let objective = Objective1d::new(field, obs, weights)?;
    Ok(newton_fit(&objective, theta0, newton)?)
}

/// `fit`: `fit.json` (record plus configuration) and `fit_trace.csv`.
pub fn run_fit(cfg: &RunConfig) -> Result<String, CliError> {
    let u = draw_uniform_field(1, cfg.n, cfg.seed)?;
    let obs = generate_synthetic_obs(cfg.theta, &u)?;
    let trace = fit_on_field(WeightField::new(&u)?, obs, cfg.theta0, &cfg.newton, cfg.weights)?;
    let record = FitRecord::from_trace(&trace, cfg.seed, cfg.n);

    fs::create_dir_all(&cfg.out)?;
    let config: serde_json::Map<String, serde_json::Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
        .collect();
    let doc = serde_json::json!({ "config": config, "record": record });
    let mut w = BufWriter::new(File::create(cfg.out.join("fit.json"))?);
    serde_json::to_writer_pretty(&mut w, &doc).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;

    let mut w = create(cfg, "fit_trace.csv")?;
    writeln!(w, "iteration,lambda,k,value,gradient_norm,step,damping")?;
    for (i, it) in trace.iterates.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{},{}",
            it.theta.lambda, it.theta.k, it.value, it.gradient_norm, it.step, it.damping
        )?;
    }
    w.flush()?;
    Ok(format!(
        "fit: {} after {} iterations ({}), theta_opt = ({:.12}, {:.12})",
        if record.converged { "converged" } else { "not converged" },
        record.iterations,
        record.reason,
        record.theta_opt.lambda,
        record.theta_opt.k
    ))
}

/// Points `lo, ..., hi` (just `lo` when `count = 1`).
pub fn linspace(range: [f64; 2], count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![range[0]];
    }
    (0..count)
        .map(|i| range[0] + (range[1] - range[0]) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Starting points of the robustness grid, lambda-major.
pub fn start_grid(lambda_range: [f64; 2], k_range: [f64; 2], count: usize) -> Result<Vec<ThetaParams>, CliError> {
    let mut out = Vec::with_capacity(count * count);
    for l in linspace(lambda_range, count) {
        for k in linspace(k_range, count) {
            out.push(ThetaParams::for_inverse(l, k)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub record: FitRecord,
    /// `|theta_opt - theta_obs|_inf`.
    pub error: f64,
}

/// Fits from every start against observations synthesized at `theta_obs` on
/// the field of `seed`.
pub fn robustness_experiment(
    theta_obs: ThetaParams,
    n: usize,
    seed: u64,
    starts: &[ThetaParams],
    newton: &NewtonOptions,
    weights: [f64; 2],
) -> Result<Vec<RobustnessRow>, CliError> {
    let u = draw_uniform_field(1, n, seed)?;
    let obs = generate_synthetic_obs(theta_obs, &u)?;
    let field = WeightField::new(&u)?;
    let objective = Objective1d::new(field, obs, weights)?;
    starts
        .par_iter()
        .map(|&theta0| {
            let trace = newton_fit(&objective, theta0, newton)?;
            let record = FitRecord::from_trace(&trace, seed, n);
            let t = record.theta_opt;
            let error = (t.lambda - theta_obs.lambda).abs().max((t.k - theta_obs.k).abs());
            Ok(RobustnessRow { record, error })
        })
        .collect()
}

/// `experiment-robustness`: `robustness.csv`.
pub fn run_experiment_robustness(cfg: &RunConfig) -> Result<String, CliError> {
    let starts = start_grid(cfg.lambda_range, cfg.k_range, cfg.grid)?;
    let rows = robustness_experiment(cfg.theta, cfg.n, cfg.seed, &starts, &cfg.newton, cfg.weights)?;
    let mut w = create(cfg, "robustness.csv")?;
    writeln!(w, "lambda0,k0,lambda_opt,k_opt,iterations,converged,reason,error_inf")?;
    for r in &rows {
        let rec = &r.record;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            rec.theta0.lambda,
            rec.theta0.k,
            rec.theta_opt.lambda,
            rec.theta_opt.k,
            rec.iterations,
            rec.converged,
            rec.reason,
            r.error
        )?;
    }
    w.flush()?;
    let converged = rows.iter().filter(|r| r.record.converged).count();
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    let max_iter = rows.iter().map(|r| r.record.iterations).max().unwrap_or(0);
    Ok(format!(
        "experiment-robustness: {converged}/{} converged, max |theta_opt - theta_obs| = {max_error:.3e}, max iterations = {max_iter}{}",
        rows.len(),
        if cfg.newton.fixed_step { " (fixed step)" } else { "" }
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub theta_ref: ThetaParams,
    pub theta0: ThetaParams,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub newton: NewtonOptions,
    pub weights: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub record: FitRecord,
    /// `K*_N(theta0)` on this field.
    pub kstar_theta0: f64,
    /// `S_N(k0)` on this field.
    pub s_n_k0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSummary {
    pub obs: Observations,
    pub lambda_opt: McSummary,
    pub k_opt: McSummary,
    pub kstar_theta0: McSummary,
    pub s_n_k0: McSummary,
    /// Closed-form homogenized coefficient at `theta0`.
    pub astar_theta0: f64,
    /// Leading-order relative variance of `K*_N(theta0)`.
    pub relvar_leading_theta0: f64,
    pub converged: usize,
}

/// Observations come from the field of `realization_seed(seed, 0)`; fit `m`
/// uses the field of `realization_seed(seed, m + 1)`.
pub fn noise_experiment(p: &NoiseParams) -> Result<(Vec<NoiseRow>, NoiseSummary), CliError> {
    let reference = draw_uniform_field(1, p.n, realization_seed(p.seed, 0))?;
    let obs = generate_synthetic_obs(p.theta_ref, &reference)?;
    let rows = (0..p.m)
        .into_par_iter()
        .map(|m| -> Result<NoiseRow, CliError> {
            let seed = realization_seed(p.seed, m + 1);
            let field = WeightField::new(&draw_uniform_field(1, p.n, seed)?)?;
            let at0 = field.aux_fg(p.theta0)?;
            let trace = fit_on_field(field, obs, p.theta0, &p.newton, p.weights)?;
            Ok(NoiseRow {
                record: FitRecord::from_trace(&trace, seed, p.n),
                kstar_theta0: p.n as f64 * at0.f,
                s_n_k0: at0.s_n,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let column = |f: &dyn Fn(&NoiseRow) -> f64| -> Result<McSummary, CliError> {
        let xs: Vec<f64> = rows.iter().map(f).collect();
        Ok(mc_summary(&xs, p.n)?)
    };
    let summary = NoiseSummary {
        obs,
        lambda_opt: column(&|r| r.record.theta_opt.lambda)?,
        k_opt: column(&|r| r.record.theta_opt.k)?,
        kstar_theta0: column(&|r| r.kstar_theta0)?,
        s_n_k0: column(&|r| r.s_n_k0)?,
        astar_theta0: astar_closed_form(p.theta0)?,
        relvar_leading_theta0: relvar_leading(p.theta0.k, p.n)?,
        converged: rows.iter().filter(|r| r.record.converged).count(),
    };
    Ok((rows, summary))
}

/// `experiment-noise`: `noise_fits.csv`, `noise_histograms.csv`,
/// `noise_summary.csv`.
pub fn run_experiment_noise(cfg: &RunConfig) -> Result<String, CliError> {
    let params = NoiseParams {
        theta_ref: cfg.theta,
        theta0: cfg.theta0,
        n: cfg.n,
        m: cfg.m,
        seed: cfg.seed,
        newton: cfg.newton,
        weights: cfg.weights,
    };
    let (rows, s) = noise_experiment(&params)?;

    let mut w = create(cfg, "noise_fits.csv")?;
    writeln!(w, "m,seed,lambda_opt,k_opt,iterations,converged,reason,kstar_theta0,s_n_k0")?;
    for (i, r) in rows.iter().enumerate() {
        let rec = &r.record;
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{},{}",
            rec.seed, rec.theta_opt.lambda, rec.theta_opt.k, rec.iterations, rec.converged, rec.reason, r.kstar_theta0, r.s_n_k0
        )?;
    }
    w.flush()?;

    let pick = |f: fn(&NoiseRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let h_k = histogram(&pick(|r| r.record.theta_opt.k), cfg.bins)?;
    let h_l = histogram(&pick(|r| r.record.theta_opt.lambda), cfg.bins)?;
    let h_kstar = histogram(&pick(|r| r.kstar_theta0), cfg.bins)?;
    let h_s = histogram(&pick(|r| r.s_n_k0), cfg.bins)?;
    let mut w = create(cfg, "noise_histograms.csv")?;
    write_histograms_csv(
        &mut w,
        &[("k_opt", &h_k), ("lambda_opt", &h_l), ("kstar_theta0", &h_kstar), ("s_n_k0", &h_s)],
    )?;
    w.flush()?;

    let mut w = create(cfg, "noise_summary.csv")?;
    writeln!(w, "quantity,mean,relvar")?;
    for (name, q) in [
        ("lambda_opt", s.lambda_opt),
        ("k_opt", s.k_opt),
        ("kstar_theta0", s.kstar_theta0),
        ("s_n_k0", s.s_n_k0),
    ] {
        writeln!(w, "{name},{},{}", q.mean, q.relvar)?;
    }
    writeln!(w, "# k_obs = {}", s.obs.k_obs)?;
    writeln!(w, "# s_obs = {}", s.obs.s_obs)?;
    writeln!(w, "# astar_theta0 = {}", s.astar_theta0)?;
    writeln!(w, "# converged = {}/{}", s.converged, rows.len())?;
    w.flush()?;

    Ok(format!(
        "experiment-noise: {}/{} converged\n  VarR[lambda_opt] = {:.3e} (mean {:.6})\n  VarR[k_opt] = {:.3e} (mean {:.6})\n  VarR[K*_N(theta0)] = {:.3e}\n  VarR[S_N(k0)] = {:.3e}\n  A*(theta0) = {:.6}",
        s.converged,
        rows.len(),
        s.lambda_opt.relvar,
        s.lambda_opt.mean,
        s.k_opt.relvar,
        s.k_opt.mean,
        s.kstar_theta0.relvar,
        s.s_n_k0.relvar,
        s.astar_theta0
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub summary: McSummary,
    /// Closed form in 1D, largest-box mean in 2D (or constant conductance).
    pub reference: f64,
    pub relative_error: f64,
    /// Leading-order relative variance in 1D, `None` otherwise.
    pub relvar_leading: Option<f64>,
}

/// Mean and relative variance of the permeability for every box size.
pub fn convergence_study(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>, CliError> {
    let law = law(cfg);
    let summaries = cfg
        .sizes
        .iter()
        .map(|&n| {
            let samples = run_monte_carlo(law.as_ref(), cfg.seed, cfg.m, &forward_config(cfg, n))?;
            Ok(summarize(&samples)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let closed_form = match (cfg.constant, cfg.dim) {
        (Some(a), _) => Some(a),
        (None, 1) if cfg.theta.k > 4.0 => Some(astar_closed_form(cfg.theta)?),
        _ => None,
    };
    let largest = summaries
        .iter()
        .max_by_key(|s| s.n)
        .map(|s| s.mean)
        .unwrap_or(f64::NAN);
    let reference = closed_form.unwrap_or(largest);
    Ok(summaries
        .into_iter()
        .map(|summary| ConvergenceRow {
            relative_error: (summary.mean - reference).abs() / reference,
            relvar_leading: (cfg.dim == 1 && cfg.constant.is_none() && cfg.theta.k >= K_VARIANCE_MIN)
                .then(|| relvar_leading(cfg.theta.k, summary.n).ok())
                .flatten(),
            reference,
            summary,
        })
        .collect())
}

/// `convergence-study`: `convergence.csv`.
pub fn run_convergence_study(cfg: &RunConfig) -> Result<String, CliError> {
    let rows = convergence_study(cfg)?;
    let mut w = create(cfg, "convergence.csv")?;
    writeln!(w, "n,m,dim,bc,mean,relvar,reference,relative_error,relvar_leading")?;
    let mut report = format!("convergence-study ({}D, {}):", cfg.dim, cfg.bc);
    for r in &rows {
        let s = &r.summary;
        let lead = r.relvar_leading.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{lead}",
            s.n, s.m, cfg.dim, cfg.bc, s.mean, s.relvar, r.reference, r.relative_error
        )?;
        report.push_str(&format!(
            "\n  N = {:>7}: mean = {:.8}, relvar = {:.3e}, |mean - ref|/ref = {:.3e}",
            s.n, s.mean, s.relvar, r.relative_error
        ));
    }
    w.flush()?;
    Ok(report)
}

/// Reads a file back without its `#` header lines.
pub fn strip_header(path: &Path) -> std::io::Result<String> {
    Ok(fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect())
}
