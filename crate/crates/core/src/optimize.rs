//! Scalar maximization helpers.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a one-dimensional maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub arg: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Maximum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !(tol > 0.0) {
        return Err(crate::error::invalid(
            "interval",
            format!("need lo < hi and tol > 0, got [{lo}, {hi}], tol {tol}"),
        ));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evaluations = 2;
    let mut seen_min = fc.min(fd);
    let mut seen_max = fc.max(fd);

    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
            seen_min = seen_min.min(fc);
            seen_max = seen_max.max(fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
            seen_min = seen_min.min(fd);
            seen_max = seen_max.max(fd);
        }
        evaluations += 1;
    }
    if seen_max == seen_min {
        return Err(Error::DegenerateObjective);
    }
    let arg = 0.5 * (a + b);
    let value = f(arg)?;
    Ok(Maximum {
        arg,
        value,
        evaluations: evaluations + 1,
    })
}

/// Index of the largest element; NaNs are never selected.
pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

/// `n` logarithmically spaced points spanning `[lo, hi]` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (l, h) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (l + (h - l) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// `n` evenly spaced points spanning `[lo, hi]` inclusive.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_peak() {
        let m = golden_section_max(|x| Ok(-(x - 0.3) * (x - 0.3)), 0.0, 1.0, 1e-9).unwrap();
        assert!((m.arg - 0.3).abs() < 1e-8);
    }

    #[test]
    fn peak_at_boundary() {
        let m = golden_section_max(Ok, 0.0, 1.0, 1e-9).unwrap();
        assert!((m.arg - 1.0).abs() < 1e-8);
    }

    #[test]
    fn flat_objective_is_degenerate() {
        let err = golden_section_max(|_| Ok(0.0), 0.0, 1.0, 1e-6).unwrap_err();
        assert_eq!(err, Error::DegenerateObjective);
    }

    #[test]
    fn spacing_helpers() {
        let g = log_space(1e-2, 1e2, 5);
        assert!((g[2] - 1.0).abs() < 1e-12);
        assert!((g[4] - 100.0).abs() < 1e-9);
        assert_eq!(lin_space(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(argmax(&[1.0, f64::NAN, 3.0, 2.0]), Some(2));
    }
}
