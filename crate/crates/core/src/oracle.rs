//! Independent numerical oracles for tests.
//!
//! Nothing here shares code with the implementation paths it is used to
//! check: the Gamma function is integrated from its definition, derivatives
//! are taken by central differences, distributions are compared through the
//! Kolmogorov-Smirnov statistic.

/// `Γ(z) = ∫_0^∞ t^(z-1) e^(-t) dt` by exp-sinh (double exponential)
/// quadrature, which absorbs the integrable singularity at `t = 0`.
pub fn gamma_quadrature(z: f64) -> f64 {
    assert!(z > 0.0);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let h = 1.0 / 64.0;
    let mut sum = 0.0;
    let (lo, hi) = (-12.0_f64, 6.0_f64);
    let steps = ((hi - lo) / h) as i64;
    for j in 0..=steps {
        let s = lo + j as f64 * h;
        let ln_t = half_pi * s.sinh();
        let t = ln_t.exp();
        // integrand times dt/ds, in log form
        let term = (z * ln_t - t).exp() * half_pi * s.cosh();
        if term.is_finite() {
            sum += term;
        }
    }
    sum * h
}

/// Relative closeness with an absolute floor for near-zero references.
pub fn close(actual: f64, expected: f64, rel_tol: f64, abs_floor: f64) -> bool {
    let diff = (actual - expected).abs();
    diff <= abs_floor || diff <= rel_tol * expected.abs().max(actual.abs())
}

/// Central differences of a scalar function of two variables, with a
/// relative step.
pub fn central_gradient<F: Fn([f64; 2]) -> f64>(f: &F, p: [f64; 2], rel_step: f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    for i in 0..2 {
        let h = rel_step * p[i].abs().max(1.0);
        let mut up = p;
        let mut dn = p;
        up[i] += h;
        dn[i] -= h;
        out[i] = (f(up) - f(dn)) / (2.0 * h);
    }
    out
}

/// Central-difference Jacobian of a vector function (row `i` = component,
/// column `j` = variable). Applied to a gradient it yields the Hessian.
pub fn central_jacobian<F: Fn([f64; 2]) -> [f64; 2]>(
    f: &F,
    p: [f64; 2],
    rel_step: f64,
) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for j in 0..2 {
        let h = rel_step * p[j].abs().max(1.0);
        let mut up = p;
        let mut dn = p;
        up[j] += h;
        dn[j] -= h;
        let (fu, fd) = (f(up), f(dn));
        for i in 0..2 {
            out[i][j] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    out
}

/// Richardson extrapolation `(4 J(h/2) - J(h)) / 3` of
/// [`central_jacobian`], fourth-order accurate. Preferred when entries are
/// many orders of magnitude below the others, where the roundoff of plain
/// central differences at small steps dominates.
pub fn richardson_jacobian<F: Fn([f64; 2]) -> [f64; 2]>(
    f: &F,
    p: [f64; 2],
    rel_step: f64,
) -> [[f64; 2]; 2] {
    let coarse = central_jacobian(f, p, rel_step);
    let fine = central_jacobian(f, p, 0.5 * rel_step);
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
        }
    }
    out
}

/// Second-order central differences of a scalar function (Hessian from
/// values only).
pub fn central_hessian<F: Fn([f64; 2]) -> f64>(f: &F, p: [f64; 2], rel_step: f64) -> [[f64; 2]; 2] {
    let h = [
        rel_step * p[0].abs().max(1.0),
        rel_step * p[1].abs().max(1.0),
    ];
    let shifted = |di: f64, dj: f64| f([p[0] + di * h[0], p[1] + dj * h[1]]);
    let f0 = f(p);
    let hxx = (shifted(1.0, 0.0) - 2.0 * f0 + shifted(-1.0, 0.0)) / (h[0] * h[0]);
    let hyy = (shifted(0.0, 1.0) - 2.0 * f0 + shifted(0.0, -1.0)) / (h[1] * h[1]);
    let hxy = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
        / (4.0 * h[0] * h[1]);
    [[hxx, hxy], [hxy, hyy]]
}

/// Eigenvalues `(smallest, largest)` of a symmetric 2x2 matrix.
pub fn sym2_eigenvalues(m: [[f64; 2]; 2]) -> (f64, f64) {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let r = (half_diff * half_diff + m[0][1] * m[1][0]).sqrt();
    (half_tr - r, half_tr + r)
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical KS distance at the 1% level for large samples.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Bootstrap standard error of a statistic, with a private SplitMix64 index
/// stream so that the oracle shares no randomness code with the library.
pub fn bootstrap_se<S: Fn(&[f64]) -> f64>(xs: &[f64], stat: S, resamples: usize, seed: u64) -> f64 {
    let mut state = seed;
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[(next() % n as u64) as usize];
            }
            stat(&buf)
        })
        .collect();
    sample_variance(&stats).sqrt()
}
