//! Box-plot summaries.

use serde::{Deserialize, Serialize};

/// Five-number summary with Tukey whiskers at 1.5 IQR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Smallest observation >= q1 - 1.5 IQR.
    pub lower_whisker: f64,
    /// Largest observation <= q3 + 1.5 IQR.
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `None` for an empty or non-finite sample.
pub fn box_summary(values: &[f64]) -> Option<BoxSummary> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let q1 = quantile(&xs, 0.25);
    let q3 = quantile(&xs, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let inside = || xs.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence);
    Some(BoxSummary {
        n: xs.len(),
        min: xs[0],
        q1,
        median: quantile(&xs, 0.5),
        q3,
        max: xs[xs.len() - 1],
        mean: super::sum::neumaier_sum(xs.iter().copied()) / xs.len() as f64,
        lower_whisker: inside().next().unwrap_or(q1),
        upper_whisker: inside().next_back().unwrap_or(q3),
        outliers: xs.iter().copied().filter(|&x| x < lo_fence || x > hi_fence).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tukey_whiskers_and_outliers() {
        let s = box_summary(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 100.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (3.0, 5.0, 7.0));
        // fences -3 and 13
        assert_eq!(s.upper_whisker, 8.0);
        assert_eq!(s.lower_whisker, 1.0);
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.max, 100.0);
    }

    #[test]
    fn interpolated_quartiles() {
        let s = box_summary(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        assert!(s.outliers.is_empty());
        assert!(box_summary(&[]).is_none());
        let one = box_summary(&[7.0]).unwrap();
        assert_eq!((one.min, one.median, one.max), (7.0, 7.0, 7.0));
    }
}
