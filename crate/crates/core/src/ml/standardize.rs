use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, N_FEATURES};
use crate::stats::sum::sorted_sum;

/// Per-feature centering and scaling, fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub mean: [f64; N_FEATURES],
    /// Population std; 1.0 for constant features.
    pub std: [f64; N_FEATURES],
    pub constant: [bool; N_FEATURES],
}

impl StandardizerParams {
    pub fn fit(rows: &[FeatureRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Training("standardizer fit on no rows".into()));
        }
        let n = rows.len() as f64;
        let mut p = StandardizerParams {
            mean: [0.0; N_FEATURES],
            std: [1.0; N_FEATURES],
            constant: [false; N_FEATURES],
        };
        for j in 0..N_FEATURES {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!("feature {j} has non-finite values")));
            }
            let mean = sorted_sum(&col) / n;
            let sq: Vec<f64> = col.iter().map(|v| (v - mean).powi(2)).collect();
            let std = (sorted_sum(&sq) / n).sqrt();
            p.mean[j] = mean;
            if std > 1e-12 * mean.abs().max(1.0) {
                p.std[j] = std;
            } else {
                p.constant[j] = true;
            }
        }
        Ok(p)
    }

    pub fn transform(&self, x: &FeatureRow) -> FeatureRow {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_then_transform_is_zero_mean_unit_std() {
        let rows: Vec<FeatureRow> = (0..10).map(|i| std::array::from_fn(|j| if j == 0 { 4.0 } else { (i * j) as f64 })).collect();
        let p = StandardizerParams::fit(&rows).unwrap();
        assert!(p.constant[0]);
        let t: Vec<FeatureRow> = rows.iter().map(|r| p.transform(r)).collect();
        for j in 1..N_FEATURES {
            let m: f64 = t.iter().map(|r| r[j]).sum::<f64>() / 10.0;
            let v: f64 = t.iter().map(|r| r[j] * r[j]).sum::<f64>() / 10.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        assert!(t.iter().all(|r| r[0] == 0.0));
    }
}
