//! Empirical mean and relative variance over Monte-Carlo realizations.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::ApparentSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    /// `(1/M) Σ K^m`.
    pub mean: f64,
    /// `(1/M) Σ (K^m - mean)^2 / mean^2`.
    pub relvar: f64,
    pub m: usize,
    pub n: usize,
}

/// Mean and relative variance (biased, `1/M`) of `samples` taken on boxes of
/// size `n`.
///
/// Samples are sorted and shifted by their minimum before the two passes, so
/// the result does not depend on sample order and is exactly zero when all
/// samples coincide.
pub fn mc_summary(samples: &[f64], n: usize) -> Result<McSummary> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Invalid(format!("non-finite sample {x}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pivot = sorted[0];
    let shifted: Vec<f64> = sorted.iter().map(|x| x - pivot).collect();
    let mean_shift = shifted.iter().sum::<f64>() / m as f64;
    let var = shifted.iter().map(|d| (d - mean_shift).powi(2)).sum::<f64>() / m as f64;
    let mean = pivot + mean_shift;
    if mean == 0.0 {
        return Err(Error::Invalid("relative variance undefined for zero mean".into()));
    }
    Ok(McSummary {
        mean,
        relvar: var / (mean * mean),
        m,
        n,
    })
}

/// Summary of the permeabilities of a batch of realizations.
pub fn summarize(samples: &[ApparentSample]) -> Result<McSummary> {
    let n = samples.first().map_or(0, |s| s.n);
    let values: Vec<f64> = samples.iter().map(|s| s.permeability).collect();
    mc_summary(&values, n)
}

/// Per-realization dump `m,seed,n,dim,lambda,k,kstar`. Constant-law samples
/// have empty `lambda` and `k` columns.
pub fn write_samples_csv<W: Write>(mut out: W, samples: &[ApparentSample]) -> io::Result<()> {
    writeln!(out, "m,seed,n,dim,lambda,k,kstar")?;
    for (i, s) in samples.iter().enumerate() {
        let (l, k) = s
            .theta
            .map_or((String::new(), String::new()), |t| (t.lambda.to_string(), t.k.to_string()));
        writeln!(out, "{i},{},{},{},{l},{k},{}", s.seed, s.n, s.dim, s.permeability)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{run_monte_carlo, ForwardConfig};
    use crate::microstructure::WeibullLaw;
    use crate::oracle;
    use crate::special::{relvar_leading, ThetaParams};
    use proptest::prelude::*;

    #[test]
    fn trivial_summaries() {
        let s = mc_summary(&[0.1, 0.1, 0.1], 5).unwrap();
        assert_eq!(s.mean, 0.1);
        assert_eq!(s.relvar, 0.0);
        let s = mc_summary(&[1.0, 3.0], 5).unwrap();
        assert_eq!((s.mean, s.relvar, s.m, s.n), (2.0, 0.25, 2, 5));
        assert!(matches!(mc_summary(&[1.0], 1), Err(Error::InsufficientSamples { .. })));
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut xs in prop::collection::vec(0.01f64..100.0, 2..40), seed in any::<u64>()) {
            let a = mc_summary(&xs, 3).unwrap();
            // deterministic shuffle
            let mut state = seed;
            for i in (1..xs.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (state >> 33) as usize % (i + 1));
            }
            let b = mc_summary(&xs, 3).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.relvar >= 0.0);
        }
    }

    #[test]
    fn relative_variance_matches_leading_order() {
        let n = 100_000;
        let samples = run_monte_carlo(
            &WeibullLaw(ThetaParams::new(1.0, 15.0).unwrap()),
            2024,
            500,
            &ForwardConfig::new(1, n),
        )
        .unwrap();
        let ks: Vec<f64> = samples.iter().map(|s| s.permeability).collect();
        let s = mc_summary(&ks, n).unwrap();
        let se = oracle::bootstrap_se(&ks, |x| mc_summary(x, n).unwrap().relvar, 400, 7);
        let expected = relvar_leading(15.0, n).unwrap();
        assert!((s.relvar - expected).abs() < 3.0 * se, "{} vs {expected} (se {se})", s.relvar);
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let samples = run_monte_carlo(
            &WeibullLaw(ThetaParams::new(1.0, 15.0).unwrap()),
            1,
            3,
            &ForwardConfig::new(1, 10),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "m,seed,n,dim,lambda,k,kstar");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with(&format!("0,{},10,1,1,15,", samples[0].seed)));
    }
}
