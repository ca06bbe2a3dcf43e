//! Run configuration: command-line flags layered over an optional flat
//! `key = value` file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use homfit_core::forward::{BoundaryCondition, SolverOptions};
use homfit_core::inverse::NewtonOptions;
use homfit_core::special::K_VARIANCE_MIN;
use homfit_core::ThetaParams;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "homfit", version, about = "Apparent permeability of random networks and Weibull parameter identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Monte-Carlo apparent permeabilities of independent realizations.
    Forward,
    /// One Newton fit against observations synthesized on the same field.
    Fit,
    /// Newton fits from a grid of starting points on one field.
    ExperimentRobustness,
    /// Fits on independent fields against fixed reference observations.
    ExperimentNoise,
    /// Mean and relative variance of the permeability as the box grows.
    ConvergenceStudy,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Fit => "fit",
            Self::ExperimentRobustness => "experiment-robustness",
            Self::ExperimentNoise => "experiment-noise",
            Self::ConvergenceStudy => "convergence-study",
        }
    }
}

/// Every flag is optional so that unset flags fall back to the config file,
/// then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Lattice dimension (1 or 2).
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Box size N.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Number of realizations M.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Radius scale of the reference / forward law.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Weibull shape of the reference / forward law.
    #[arg(long, global = true)]
    pub k: Option<f64>,
    /// Initial guess for lambda.
    #[arg(long, global = true)]
    pub lambda0: Option<f64>,
    /// Initial guess for k.
    #[arg(long, global = true)]
    pub k0: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Histogram bins.
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long = "grad-tol", global = true)]
    pub grad_tol: Option<f64>,
    #[arg(long = "step-tol", global = true)]
    pub step_tol: Option<f64>,
    /// Weights of the permeability and variance residuals, as `w1,w2`.
    #[arg(long, global = true)]
    pub weights: Option<String>,
    /// Boundary condition of the corrector problem: periodic, dirichlet or pnm.
    #[arg(long, global = true)]
    pub bc: Option<String>,
    /// Relative residual of the linear solver.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Replace the Weibull law by a constant conductance (debugging aid).
    #[arg(long, global = true)]
    pub constant: Option<f64>,
    /// Force the Newton step size to 1.
    #[arg(long = "fixed-step", global = true)]
    pub fixed_step: bool,
    /// Starting points per axis of the robustness grid.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Range of lambda0 on the robustness grid, as `lo,hi`.
    #[arg(long = "lambda-range", global = true)]
    pub lambda_range: Option<String>,
    /// Range of k0 on the robustness grid, as `lo,hi`.
    #[arg(long = "k-range", global = true)]
    pub k_range: Option<String>,
    /// Box sizes of the convergence study, as a comma-separated list.
    #[arg(long, global = true)]
    pub sizes: Option<String>,
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    pub theta: ThetaParams,
    pub theta0: ThetaParams,
    pub seed: u64,
    pub out: PathBuf,
    pub bins: usize,
    pub threads: Option<usize>,
    pub newton: NewtonOptions,
    pub weights: [f64; 2],
    pub bc: BoundaryCondition,
    pub solver: SolverOptions,
    pub constant: Option<f64>,
    pub grid: usize,
    pub lambda_range: [f64; 2],
    pub k_range: [f64; 2],
    pub sizes: Vec<usize>,
}

const KEYS: &[&str] = &[
    "dim", "n", "m", "lambda", "k", "lambda0", "k0", "seed", "out", "bins", "threads", "grad-tol",
    "step-tol", "weights", "bc", "tol", "constant", "fixed-step", "grid", "lambda-range", "k-range",
    "sizes",
];

/// Reads a flat config file: one `key = value` per line, `#` comments,
/// keys spelled like the long flags (`_` accepted for `-`).
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("line {}: unknown key '{key}'", i + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Config(format!("invalid value '{raw}' for {key}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError> {
    raw.split(',').map(|s| parse_value(key, s.trim())).collect()
}

fn parse_pair(key: &str, raw: &str) -> Result<[f64; 2], CliError> {
    match parse_list::<f64>(key, raw)?.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(CliError::Config(format!("{key} needs two comma-separated numbers, got '{raw}'"))),
    }
}

struct Layers<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layers<'_> {
    fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file.get(key).map(|raw| parse_value(key, raw)).transpose(),
        }
    }

    fn raw(&self, key: &str, flag: &Option<String>) -> Option<String> {
        flag.clone().or_else(|| self.file.get(key).cloned())
    }
}

impl RunConfig {
    pub fn resolve(command: Command, flags: &Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        Self::resolve_with(command, flags, &file)
    }

    pub fn resolve_with(command: Command, flags: &Flags, file: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let l = Layers { file };
        let dim = l.get("dim", flags.dim)?.unwrap_or(1);
        let default_n = if dim == 1 { 100_000 } else { 32 };
        let n = l.get("n", flags.n)?.unwrap_or(default_n);
        let m = l.get("m", flags.m)?.unwrap_or(500);
        let lambda = l.get("lambda", flags.lambda)?.unwrap_or(1.0);
        let k = l.get("k", flags.k)?.unwrap_or(15.0);
        let lambda0 = l.get("lambda0", flags.lambda0)?.unwrap_or(1.1);
        let k0 = l.get("k0", flags.k0)?.unwrap_or(16.5);
        let seed = l.get("seed", flags.seed)?.unwrap_or(20_130_722);
        let out = l.get("out", flags.out.clone())?.unwrap_or_else(|| PathBuf::from("out"));
        let bins = l.get("bins", flags.bins)?.unwrap_or(30);
        let threads = l.get("threads", flags.threads)?;
        let defaults = NewtonOptions::default();
        let fixed_step = flags.fixed_step || l.get::<bool>("fixed-step", None)?.unwrap_or(false);
        let newton = NewtonOptions {
            grad_tol: l.get("grad-tol", flags.grad_tol)?.unwrap_or(defaults.grad_tol),
            step_tol: l.get("step-tol", flags.step_tol)?.unwrap_or(defaults.step_tol),
            fixed_step,
            ..defaults
        };
        let weights = match l.raw("weights", &flags.weights) {
            Some(raw) => parse_pair("weights", &raw)?,
            None => [1.0, 1.0],
        };
        let bc = match l.raw("bc", &flags.bc) {
            Some(raw) => raw.parse().map_err(|e: homfit_core::Error| CliError::Config(e.to_string()))?,
            None => BoundaryCondition::Periodic,
        };
        let solver = SolverOptions::with_tol(l.get("tol", flags.tol)?.unwrap_or(1e-10));
        let constant = l.get("constant", flags.constant)?;
        let grid = l.get("grid", flags.grid)?.unwrap_or(5);
        let lambda_range = match l.raw("lambda-range", &flags.lambda_range) {
            Some(raw) => parse_pair("lambda-range", &raw)?,
            None => [0.8, 1.3],
        };
        let k_range = match l.raw("k-range", &flags.k_range) {
            Some(raw) => parse_pair("k-range", &raw)?,
            None => [12.0, 25.0],
        };
        let sizes = match l.raw("sizes", &flags.sizes) {
            Some(raw) => parse_list("sizes", &raw)?,
            None if dim == 1 => vec![100, 1_000, 10_000, 100_000],
            None => vec![8, 16, 32, 64],
        };

        let theta = ThetaParams::new(lambda, k).map_err(config_err)?;
        let theta0 = ThetaParams::new(lambda0, k0).map_err(config_err)?;
        let cfg = Self {
            command,
            dim,
            n,
            m,
            theta,
            theta0,
            seed,
            out,
            bins,
            threads,
            newton,
            weights,
            bc,
            solver,
            constant,
            grid,
            lambda_range,
            k_range,
            sizes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if !(1..=2).contains(&self.dim) {
            return fail(format!("dim must be 1 or 2, got {}", self.dim));
        }
        if self.n < 2 {
            return fail(format!("n must be >= 2, got {}", self.n));
        }
        if self.bins == 0 {
            return fail("bins must be >= 1".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be >= 1".into());
        }
        if !(self.solver.tol > 0.0) {
            return fail(format!("tol must be > 0, got {}", self.solver.tol));
        }
        self.newton.validate().map_err(config_err)?;
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return fail(format!("weights must be positive, got {:?}", self.weights));
        }
        if let Some(a) = self.constant {
            if !(a.is_finite() && a > 0.0) {
                return fail(format!("constant conductance must be > 0, got {a}"));
            }
        }
        let inverse = matches!(
            self.command,
            Command::Fit | Command::ExperimentRobustness | Command::ExperimentNoise
        );
        if inverse {
            if self.dim != 1 {
                return fail(format!("{} is only available in dimension 1", self.command.name()));
            }
            self.theta.check_inverse_domain().map_err(config_err)?;
            self.theta0.check_inverse_domain().map_err(config_err)?;
        }
        match self.command {
            Command::Forward | Command::ExperimentNoise | Command::ConvergenceStudy if self.m < 2 => {
                fail(format!("m must be >= 2, got {}", self.m))
            }
            Command::ExperimentRobustness => {
                if self.grid == 0 {
                    return fail("grid must be >= 1".into());
                }
                let ok = self.lambda_range[0] > 0.0
                    && self.lambda_range[0] <= self.lambda_range[1]
                    && self.k_range[0] >= K_VARIANCE_MIN
                    && self.k_range[0] <= self.k_range[1];
                if !ok {
                    return fail(format!(
                        "grid ranges must be ordered inside lambda > 0, k >= {K_VARIANCE_MIN}"
                    ));
                }
                Ok(())
            }
            Command::ConvergenceStudy if self.sizes.is_empty() || self.sizes.iter().any(|&s| s < 2) => {
                fail("sizes must be a non-empty list of box sizes >= 2".into())
            }
            _ => Ok(()),
        }
    }

    /// Every setting as `(key, value)`, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("command", self.command.name().to_string()),
            ("version", env!("CARGO_PKG_VERSION").to_string()),
            ("dim", self.dim.to_string()),
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("lambda", self.theta.lambda.to_string()),
            ("k", self.theta.k.to_string()),
            ("lambda0", self.theta0.lambda.to_string()),
            ("k0", self.theta0.k.to_string()),
            ("seed", self.seed.to_string()),
            ("bins", self.bins.to_string()),
            ("grad-tol", self.newton.grad_tol.to_string()),
            ("step-tol", self.newton.step_tol.to_string()),
            ("fixed-step", self.newton.fixed_step.to_string()),
            ("weights", format!("{},{}", self.weights[0], self.weights[1])),
            ("bc", self.bc.to_string()),
            ("tol", self.solver.tol.to_string()),
            ("constant", self.constant.map_or("none".into(), |a| a.to_string())),
            ("grid", self.grid.to_string()),
            ("lambda-range", format!("{},{}", self.lambda_range[0], self.lambda_range[1])),
            ("k-range", format!("{},{}", self.k_range[0], self.k_range[1])),
            (
                "sizes",
                self.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            ),
        ]
    }

    /// Header comment lines (`# key = value`) recording the whole
    /// configuration. Thread count is left out since it does not affect
    /// results.
    pub fn header(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

fn config_err(e: homfit_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(command: Command, args: &[&str], file: &str) -> Result<RunConfig, CliError> {
        let mut argv = vec!["homfit", command.name()];
        argv.extend_from_slice(args);
        let cli = Cli::try_parse_from(argv).unwrap();
        RunConfig::resolve_with(cli.command, &cli.flags, &parse_config(file).unwrap())
    }

    #[test]
    fn defaults_follow_the_reference_setting() {
        let c = resolve(Command::ExperimentNoise, &[], "").unwrap();
        assert_eq!((c.dim, c.n, c.m, c.bins), (1, 100_000, 500, 30));
        assert_eq!(c.theta0.as_array(), [1.1, 16.5]);
        assert_eq!(c.weights, [1.0, 1.0]);
    }

    #[test]
    fn flags_override_file() {
        let c = resolve(Command::Forward, &["--n", "50"], "n = 10\nm = 7 # comment\nbc=pnm\n").unwrap();
        assert_eq!(c.n, 50);
        assert_eq!(c.m, 7);
        assert_eq!(c.bc, BoundaryCondition::Reservoir);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(resolve(Command::Forward, &["--dim", "3"], "").is_err());
        assert!(resolve(Command::Fit, &["--k", "7"], "").is_err());
        assert!(resolve(Command::Fit, &["--dim", "2"], "").is_err());
        assert!(resolve(Command::Forward, &["--m", "1"], "").is_err());
        assert!(resolve(Command::Forward, &["--weights", "1"], "").is_err());
        assert!(resolve(Command::Forward, &["--bc", "neumann"], "").is_err());
        assert!(parse_config("colour = blue").is_err());
        assert!(parse_config("n 10").is_err());
    }

    #[test]
    fn header_lists_seed_and_config() {
        let c = resolve(Command::Forward, &["--seed", "9"], "").unwrap();
        let h = c.header();
        assert!(h.starts_with("# command = forward\n"));
        assert!(h.contains("# seed = 9\n"));
        assert!(h.lines().all(|l| l.starts_with("# ")));
    }
}
