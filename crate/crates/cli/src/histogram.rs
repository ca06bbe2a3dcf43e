use std::io::{self, Write};

use homfit_core::{Error, Result};

/// Equal-width bins over `[min, max]`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if bins == 0 {
        return Err(Error::Invalid("histogram needs at least one bin".into()));
    }
    if let Some(x) = values.iter().find(|x| !x.is_finite()) {
        return Err(Error::Invalid(format!("cannot bin non-finite value {x}")));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    let mut counts = vec![0; bins];
    for &x in values {
        let bin = if hi > lo {
            (((x - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        counts[bin] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Long-format dump `quantity,bin,lo,hi,count` of several histograms.
pub fn write_histograms_csv<W: Write>(mut out: W, histograms: &[(&str, &Histogram)]) -> io::Result<()> {
    writeln!(out, "quantity,bin,lo,hi,count")?;
    for (name, h) in histograms {
        for (i, c) in h.counts.iter().enumerate() {
            writeln!(out, "{name},{i},{},{},{c}", h.edges[i], h.edges[i + 1])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use homfit_core::microstructure::CounterRng;

    #[test]
    fn small_cases() {
        assert_eq!(histogram(&[0.0, 1.0, 2.0, 3.0], 2).unwrap().counts, vec![2, 2]);
        let h = histogram(&[4.0; 7], 5).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 7);
        assert!(histogram(&[], 3).is_err());
        assert!(histogram(&[1.0], 0).is_err());
        assert!(histogram(&[f64::NAN], 2).is_err());
    }

    #[test]
    fn uniform_counts_are_binomial() {
        let n = 100_000;
        let rng = CounterRng::new(8);
        let xs: Vec<f64> = (0..n as u64).map(|i| rng.open_unit_at(i)).collect();
        let h = histogram(&xs, 10).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), n);
        // bins span the sample range, which is within 1e-4 of [0, 1]
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        for c in &h.counts {
            assert!((*c as f64 - 10_000.0).abs() < 3.0 * sigma, "count {c}");
        }
        assert_eq!(h.edges.len(), 11);
    }

    #[test]
    fn csv_rows() {
        let h = histogram(&[0.0, 1.0], 2).unwrap();
        let mut buf = Vec::new();
        write_histograms_csv(&mut buf, &[("x", &h)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "quantity,bin,lo,hi,count\nx,0,0,0.5,1\nx,1,0.5,1,1\n");
    }
}
