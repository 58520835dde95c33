use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ActivityLabel;

/// 2x2 confusion counts indexed `[actual][predicted]` by [`ActivityLabel::index`].
pub type Confusion = [[usize; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a metric had a zero denominator and was reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub video_watching: ClassMetrics,
    pub reading: ClassMetrics,
}

impl Metrics {
    pub fn class(&self, label: ActivityLabel) -> &ClassMetrics {
        match label {
            ActivityLabel::Reading => &self.reading,
            ActivityLabel::VideoWatching => &self.video_watching,
        }
    }
}

fn ratio(num: usize, den: usize, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(c: &Confusion, k: usize) -> ClassMetrics {
    let tp = c[k][k];
    let predicted = c[0][k] + c[1][k];
    let actual = c[k][0] + c[k][1];
    let mut undefined = false;
    let precision = ratio(tp, predicted, &mut undefined);
    let recall = ratio(tp, actual, &mut undefined);
    let f1 = if precision + recall == 0.0 {
        undefined = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics { precision, recall, f1, undefined }
}

pub fn metrics_from_confusion(c: &Confusion) -> Result<Metrics> {
    let total: usize = c.iter().flatten().sum();
    if total == 0 {
        return Err(Error::Domain("confusion matrix is empty".into()));
    }
    Ok(Metrics {
        accuracy: (c[0][0] + c[1][1]) as f64 / total as f64,
        reading: class_metrics(c, ActivityLabel::Reading.index()),
        video_watching: class_metrics(c, ActivityLabel::VideoWatching.index()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn diagonal_is_perfect() {
        let m = metrics_from_confusion(&[[10, 0], [0, 10]]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        for c in [m.reading, m.video_watching] {
            assert_eq!((c.precision, c.recall, c.f1, c.undefined), (1.0, 1.0, 1.0, false));
        }
    }

    #[test]
    fn never_predicted_class_is_flagged() {
        // everything predicted Reading
        let m = metrics_from_confusion(&[[5, 0], [5, 0]]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.reading.recall, 1.0);
        assert_eq!(m.video_watching.recall, 0.0);
        assert_eq!(m.video_watching.precision, 0.0);
        assert!(m.video_watching.undefined);
        assert!(metrics_from_confusion(&[[0, 0], [0, 0]]).is_err());
    }

    #[test]
    fn random_matrices_match_direct_formulas() {
        let mut rng = crate::seed::rng(9);
        for _ in 0..200 {
            let c: Confusion = [[rng.random_range(1..50), rng.random_range(1..50)], [rng.random_range(1..50), rng.random_range(1..50)]];
            let m = metrics_from_confusion(&c).unwrap();
            let (rr, rv, vr, vv) = (c[0][0] as f64, c[0][1] as f64, c[1][0] as f64, c[1][1] as f64);
            let p_v = vv / (vv + rv);
            let r_v = vv / (vv + vr);
            let p_r = rr / (rr + vr);
            let r_r = rr / (rr + rv);
            assert!((m.accuracy - (rr + vv) / (rr + rv + vr + vv)).abs() < 1e-15);
            assert!((m.video_watching.precision - p_v).abs() < 1e-15);
            assert!((m.video_watching.recall - r_v).abs() < 1e-15);
            assert!((m.reading.precision - p_r).abs() < 1e-15);
            assert!((m.reading.recall - r_r).abs() < 1e-15);
            assert!((m.video_watching.f1 - 2.0 / (1.0 / p_v + 1.0 / r_v)).abs() < 1e-12);
            assert!((m.reading.f1 - 2.0 / (1.0 / p_r + 1.0 / r_r)).abs() < 1e-12);
        }
    }
}
