//! Reproducible microstructures: uniform fields on lattice edges and their
//! transformation into Weibull radii and conductances.

pub mod rng;

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::special::ThetaParams;

pub use rng::{derive_seed, CounterRng};

/// Constant relating conductance to radius^4. Set to 1; a Poiseuille
/// channel would use `pi / (8 * viscosity)`.
pub const CONDUCTANCE_PREFACTOR: f64 = 1.0;

/// Conductances below this are treated as corrupted input.
pub const MIN_CONDUCTANCE: f64 = 1e-300;

/// Shape of an edge field: a periodic box of `n^dim` sites with one edge per
/// site and axis.
///
/// The edge `(x, x + e_axis)` lives at entry `axis * n^dim + site(x)`, with
/// `site(x) = x_0 + n * x_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dim: usize,
    pub n: usize,
}

impl Layout {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n == 0 {
            return Err(Error::Invalid("box size must be >= 1".into()));
        }
        Ok(Self { dim, n })
    }

    pub fn sites(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.dim * self.sites()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn entry(&self, site: usize, axis: usize) -> usize {
        axis * self.sites() + site
    }
}

/// Independent uniform draws in the open interval `(0, 1)`, one per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformField {
    pub layout: Layout,
    pub seed: u64,
    values: Vec<f64>,
}

impl UniformField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Wraps caller-supplied draws (for tests and audits). Every entry must lie
    /// strictly inside `(0, 1)`.
    pub fn from_values(layout: Layout, seed: u64, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Invalid(format!(
                "expected {} uniform values, got {}",
                layout.len(),
                values.len()
            )));
        }
        if let Some(u) = values.iter().find(|u| !(**u > 0.0 && **u < 1.0)) {
            return Err(Error::domain("uniform field", format!("value {u} outside (0, 1)")));
        }
        Ok(Self { layout, seed, values })
    }
}

/// Draws the uniform field of a `dim`-dimensional box of side `n`.
///
/// Deterministic in `(dim, n, seed)`.
pub fn draw_uniform_field(dim: usize, n: usize, seed: u64) -> Result<UniformField> {
    let layout = Layout::new(dim, n)?;
    let rng = CounterRng::new(seed);
    let values = (0..layout.len() as u64).map(|i| rng.open_unit_at(i)).collect();
    Ok(UniformField { layout, seed, values })
}

fn check_open_unit(what: &'static str, u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(what, format!("uniform draw must lie in (0, 1), got {u}")));
    }
    Ok(())
}

/// `-ln(1 - u)`, a unit exponential variate.
#[inline]
fn exponential(u: f64) -> f64 {
    -(-u).ln_1p()
}

/// Inverse-transform Weibull sample `lambda * (-ln(1 - u))^(1/k)`.
pub fn weibull_radius(u: f64, theta: ThetaParams) -> Result<f64> {
    check_open_unit("weibull_radius", u)?;
    Ok(theta.lambda * exponential(u).powf(1.0 / theta.k))
}

/// Channel conductance `C0 * radius^4`, Weibull(lambda^4, k/4) distributed.
pub fn conductance_from_uniform(u: f64, theta: ThetaParams) -> Result<f64> {
    Ok(CONDUCTANCE_PREFACTOR * weibull_radius(u, theta)?.powi(4))
}

/// `w = (-ln(1 - u))^(-1/k)`; `1/w` is Weibull(1, k) distributed.
pub fn w_transform(u: f64, k: f64) -> Result<f64> {
    check_open_unit("w_transform", u)?;
    if !(k > 0.0) {
        return Err(Error::domain("w_transform", format!("shape must be > 0, got {k}")));
    }
    Ok(1.0 / exponential(u).powf(1.0 / k))
}

/// Map from a uniform draw to an edge conductance.
///
/// Weibull is the only law shipped, but fields are built through this trait
/// so that any smooth `u -> a(u, theta)` can be substituted.
pub trait MicroLaw: Sync {
    /// Conductance for a draw `u` in `(0, 1)`.
    fn conductance(&self, u: f64) -> Result<f64>;

    fn params(&self) -> Option<ThetaParams> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullLaw(pub ThetaParams);

impl MicroLaw for WeibullLaw {
    fn conductance(&self, u: f64) -> Result<f64> {
        conductance_from_uniform(u, self.0)
    }

    fn params(&self) -> Option<ThetaParams> {
        Some(self.0)
    }
}

/// Every edge gets the same conductance, whatever the draw. Used to check
/// pipelines against the trivial homogenization result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLaw(pub f64);

impl MicroLaw for ConstantLaw {
    fn conductance(&self, _u: f64) -> Result<f64> {
        Ok(self.0)
    }
}

/// Where a conductance field came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOrigin {
    pub seed: u64,
    pub theta: Option<ThetaParams>,
}

/// Positive finite conductances, one per lattice edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceField {
    pub layout: Layout,
    pub origin: Option<FieldOrigin>,
    values: Vec<f64>,
}

impl ConductanceField {
    /// Validates and wraps raw conductances laid out as described on [`Layout`].
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DegenerateField(format!(
                "expected {} conductances, got {}",
                layout.len(),
                values.len()
            )));
        }
        if let Some((i, a)) = values
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && **a >= MIN_CONDUCTANCE))
        {
            return Err(Error::DegenerateField(format!("conductance {a} at entry {i}")));
        }
        Ok(Self {
            layout,
            origin: None,
            values,
        })
    }

    pub fn constant(layout: Layout, a: f64) -> Result<Self> {
        Self::new(layout, vec![a; layout.len()])
    }

    /// Applies `law` entrywise to a uniform field.
    pub fn from_law<L: MicroLaw + ?Sized>(uniform: &UniformField, law: &L) -> Result<Self> {
        let values = uniform
            .values()
            .iter()
            .map(|&u| law.conductance(u))
            .collect::<Result<Vec<_>>>()?;
        let mut field = Self::new(uniform.layout, values)?;
        field.origin = Some(FieldOrigin {
            seed: uniform.seed,
            theta: law.params(),
        });
        Ok(field)
    }

    pub fn weibull(uniform: &UniformField, theta: ThetaParams) -> Result<Self> {
        Self::from_law(uniform, &WeibullLaw(theta))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, site: usize, axis: usize) -> f64 {
        self.values[self.layout.entry(site, axis)]
    }

    /// Conductances of one axis, indexed by site.
    pub fn axis(&self, axis: usize) -> &[f64] {
        let s = self.layout.sites();
        &self.values[axis * s..(axis + 1) * s]
    }

    /// Same field with every conductance multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new(self.layout, self.values.iter().map(|a| a * factor).collect())?;
        out.origin = self.origin;
        Ok(out)
    }
}

/// Writes an audit dump `index,u,a` of a uniform field and the conductances
/// built from it.
pub fn write_field_csv<W: Write>(
    mut out: W,
    uniform: &UniformField,
    field: &ConductanceField,
) -> io::Result<()> {
    writeln!(out, "index,u,a")?;
    for (i, (u, a)) in uniform.values().iter().zip(field.values()).enumerate() {
        writeln!(out, "{i},{u:e},{a:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::special::gamma;
    use proptest::prelude::*;

    fn theta(l: f64, k: f64) -> ThetaParams {
        ThetaParams::new(l, k).unwrap()
    }

    const U_UNIT: f64 = 1.0 - 1.0 / std::f64::consts::E;

    #[test]
    fn uniform_field_is_deterministic() {
        let a = draw_uniform_field(2, 17, 99).unwrap();
        let b = draw_uniform_field(2, 17, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 17 * 17);
        assert_ne!(a, draw_uniform_field(2, 17, 100).unwrap());
    }

    #[test]
    fn uniform_field_moments_and_range() {
        let f = draw_uniform_field(1, 100_000, 2024).unwrap();
        let m = oracle::mean(f.values());
        // 3 sigma = 3 / sqrt(12 * 1e5) ≈ 0.0027
        assert!((0.497..=0.503).contains(&m), "mean {m}");
        let min = f.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = f.values().iter().cloned().fold(0.0, f64::max);
        assert!(min > 0.0 && max < 1.0);
    }

    #[test]
    fn layout_rejects_bad_shapes() {
        assert!(draw_uniform_field(3, 4, 1).is_err());
        assert!(draw_uniform_field(1, 0, 1).is_err());
        assert!(UniformField::from_values(Layout::new(1, 2).unwrap(), 0, vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn radius_closed_values() {
        for t in [theta(1.0, 15.0), theta(2.5, 3.0), theta(0.3, 40.0)] {
            assert!((weibull_radius(U_UNIT, t).unwrap() - t.lambda).abs() < 1e-14 * t.lambda.max(1.0));
        }
        let u = 1.0 - (-3.0f64).exp();
        assert!((weibull_radius(u, theta(2.0, 1.0)).unwrap() - 6.0).abs() < 1e-13);
        assert!(weibull_radius(0.0, theta(1.0, 1.0)).is_err());
        assert!(weibull_radius(1.0, theta(1.0, 1.0)).is_err());
        assert!(conductance_from_uniform(1.2, theta(1.0, 1.0)).is_err());
        assert!(w_transform(-0.1, 15.0).is_err());
        assert!(w_transform(0.3, 0.0).is_err());
    }

    #[test]
    fn conductance_and_w_unit_values() {
        let t = theta(1.3, 15.0);
        assert!((conductance_from_uniform(U_UNIT, t).unwrap() - 1.3f64.powi(4)).abs() < 1e-13);
        assert!((w_transform(U_UNIT, 15.0).unwrap() - 1.0).abs() < 1e-15);
    }

    /// `|a - b|` in units of the spacing of floats just above `|b|`.
    fn ulps_apart(a: f64, b: f64) -> f64 {
        let ulp = f64::from_bits(b.abs().to_bits() + 1) - b.abs();
        (a - b).abs() / ulp
    }

    proptest! {
        #[test]
        fn algebraic_ties(u in 1e-12f64..(1.0 - 1e-12), l in 0.2f64..3.0, k in 8.5f64..60.0) {
            let t = theta(l, k);
            let r = weibull_radius(u, t).unwrap();
            let a = conductance_from_uniform(u, t).unwrap();
            prop_assert!(ulps_apart(a, r.powi(4)) <= 4.0);
            let w = w_transform(u, k).unwrap();
            let a1 = conductance_from_uniform(u, theta(1.0, k)).unwrap();
            prop_assert!(ulps_apart(w.powi(4) * a1, 1.0) <= 4.0);
            prop_assert!(ulps_apart(w.powi(4) * a, l.powi(4)) <= 12.0);
        }
    }

    fn weibull_cdf(x: f64, scale: f64, shape: f64) -> f64 {
        1.0 - (-(x / scale).powf(shape)).exp()
    }

    #[test]
    fn ks_tests_for_radius_conductance_and_inverse_w() {
        let n = 100_000;
        for (seed, t) in [(11, theta(1.0, 15.0)), (12, theta(1.1, 16.5))] {
            let u = draw_uniform_field(1, n, seed).unwrap();
            let r: Vec<f64> = u.values().iter().map(|&x| weibull_radius(x, t).unwrap()).collect();
            let a: Vec<f64> = u.values().iter().map(|&x| conductance_from_uniform(x, t).unwrap()).collect();
            let iw: Vec<f64> = u.values().iter().map(|&x| 1.0 / w_transform(x, t.k).unwrap()).collect();
            let crit = oracle::ks_critical_1pct(n);
            assert!(oracle::ks_statistic(&r, |x| weibull_cdf(x, t.lambda, t.k)) < crit);
            assert!(oracle::ks_statistic(&a, |x| weibull_cdf(x, t.lambda.powi(4), t.k / 4.0)) < crit);
            assert!(oracle::ks_statistic(&iw, |x| weibull_cdf(x, 1.0, t.k)) < crit);
        }
    }

    #[test]
    fn conductance_mean_matches_weibull_moment() {
        let n = 1_000_000;
        let u = draw_uniform_field(1, n, 5).unwrap();
        let t = theta(1.0, 15.0);
        let a: Vec<f64> = u.values().iter().map(|&x| conductance_from_uniform(x, t).unwrap()).collect();
        let se = (oracle::sample_variance(&a) / n as f64).sqrt();
        let expected = gamma(1.0 + 4.0 / 15.0).unwrap();
        assert!((oracle::mean(&a) - expected).abs() < 3.0 * se);
    }

    #[test]
    fn w4_mean_matches_inverse_moment() {
        let n = 1_000_000;
        let u = draw_uniform_field(1, n, 6).unwrap();
        let w4: Vec<f64> = u.values().iter().map(|&x| w_transform(x, 15.0).unwrap().powi(4)).collect();
        let se = (oracle::sample_variance(&w4) / n as f64).sqrt();
        let expected = gamma(1.0 - 4.0 / 15.0).unwrap();
        assert!((oracle::mean(&w4) - expected).abs() < 3.0 * se);
    }

    #[test]
    fn conductance_field_validation() {
        let l = Layout::new(1, 3).unwrap();
        assert!(ConductanceField::new(l, vec![1.0, 0.0, 1.0]).is_err());
        assert!(ConductanceField::new(l, vec![1.0, f64::NAN, 1.0]).is_err());
        assert!(ConductanceField::new(l, vec![1.0, 1e-301, 1.0]).is_err());
        assert!(ConductanceField::new(l, vec![1.0, 2.0]).is_err());
        assert!(ConductanceField::new(l, vec![1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn weibull_field_records_origin_and_layout() {
        let u = draw_uniform_field(2, 4, 3).unwrap();
        let t = theta(1.0, 15.0);
        let f = ConductanceField::weibull(&u, t).unwrap();
        assert_eq!(f.origin, Some(FieldOrigin { seed: 3, theta: Some(t) }));
        assert_eq!(f.axis(1).len(), 16);
        assert_eq!(f.get(5, 1), conductance_from_uniform(u.values()[16 + 5], t).unwrap());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let u = draw_uniform_field(1, 3, 1).unwrap();
        let f = ConductanceField::weibull(&u, theta(1.0, 15.0)).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &u, &f).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "index,u,a");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("1,"));
    }
}
