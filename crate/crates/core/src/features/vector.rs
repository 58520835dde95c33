use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::events::{saccade_velocity, EventKind, GazeEvent};
use crate::error::{Error, Result};
use crate::ingest::{ActivityId, LearnerMeta};
use crate::stats::sum::neumaier_sum;

pub const N_FEATURES: usize = 16;

pub type FeatureRow = [f64; N_FEATURES];

/// Model input column names, in row order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "sex",
    "saccade_number",
    "velocity",
    "velocity_x",
    "velocity_y",
    "max_velocity",
    "min_velocity",
    "deviation",
    "deviation_x",
    "deviation_y",
    "kurtosis",
    "kurtosis_x",
    "kurtosis_y",
    "skew",
    "skew_x",
    "skew_y",
];

/// Class predicted by the activity classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityLabel {
    Reading,
    VideoWatching,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 2] = [ActivityLabel::Reading, ActivityLabel::VideoWatching];

    pub fn from_activity(a: &ActivityId) -> Option<Self> {
        match a {
            ActivityId::Reading => Some(ActivityLabel::Reading),
            ActivityId::Video => Some(ActivityLabel::VideoWatching),
            _ => None,
        }
    }

    /// Regression target: reading 0, video watching 1.
    pub fn target(self) -> f64 {
        match self {
            ActivityLabel::Reading => 0.0,
            ActivityLabel::VideoWatching => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityLabel::Reading => "reading",
            ActivityLabel::VideoWatching => "video_watching",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reading" => Ok(ActivityLabel::Reading),
            "video_watching" | "video" | "videowatching" => Ok(ActivityLabel::VideoWatching),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Population moments of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Population (biased) standard deviation.
    pub std: f64,
    /// m3 / m2^(3/2).
    pub skew: f64,
    /// Fisher excess kurtosis, m4 / m2^2 - 3.
    pub kurtosis: f64,
    pub min: f64,
    pub max: f64,
    /// Variance is zero at working precision; skew and kurtosis are set to 0.
    pub degenerate: bool,
}

/// Moments of `values`. Values are sorted before summation, so the result
/// is independent of input order bit for bit.
pub fn moments(values: &[f64]) -> Result<Moments> {
    if values.is_empty() {
        return Err(Error::Domain("moments of an empty sample".into()));
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let min = xs[0];
    let max = xs[xs.len() - 1];
    let mean = (neumaier_sum(xs.iter().copied()) / n).clamp(min, max);
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let m2 = neumaier_sum(dev.iter().map(|d| d * d)) / n;
    let scale = min.abs().max(max.abs());
    let degenerate = scale == 0.0 || m2.sqrt() <= 8.0 * f64::EPSILON * scale;
    if degenerate {
        return Ok(Moments {
            mean,
            std: 0.0,
            skew: 0.0,
            kurtosis: 0.0,
            min,
            max,
            degenerate,
        });
    }
    let m3 = neumaier_sum(dev.iter().map(|d| d * d * d)) / n;
    let m4 = neumaier_sum(dev.iter().map(|d| (d * d) * (d * d))) / n;
    Ok(Moments {
        mean,
        std: m2.sqrt(),
        skew: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2) - 3.0,
        min,
        max,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Degeneracy {
    pub magnitude: bool,
    pub x: bool,
    pub y: bool,
}

/// Saccade-velocity features of one window, plus its label and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub participant_id: String,
    pub window_start: i64,
    pub sex_code: u8,
    pub label: ActivityLabel,
    pub saccade_count: usize,
    pub v_mean: f64,
    pub v_x_mean: f64,
    pub v_y_mean: f64,
    pub v_max: f64,
    pub v_min: f64,
    pub v_std: f64,
    pub v_x_std: f64,
    pub v_y_std: f64,
    pub v_kurt: f64,
    pub v_x_kurt: f64,
    pub v_y_kurt: f64,
    pub v_skew: f64,
    pub v_x_skew: f64,
    pub v_y_skew: f64,
    pub degenerate: Degeneracy,
}

impl FeatureVector {
    /// Model input in [`FEATURE_NAMES`] order.
    pub fn row(&self) -> FeatureRow {
        [
            f64::from(self.sex_code),
            self.saccade_count as f64,
            self.v_mean,
            self.v_x_mean,
            self.v_y_mean,
            self.v_max,
            self.v_min,
            self.v_std,
            self.v_x_std,
            self.v_y_std,
            self.v_kurt,
            self.v_x_kurt,
            self.v_y_kurt,
            self.v_skew,
            self.v_x_skew,
            self.v_y_skew,
        ]
    }

    /// Inverse of [`FeatureVector::row`]; degeneracy is inferred from zero deviations.
    pub fn from_row(participant_id: &str, window_start: i64, label: ActivityLabel, r: &FeatureRow) -> Result<Self> {
        let code = r[0];
        if code != 0.0 && code != 1.0 {
            return Err(Error::Domain(format!("sex code {code} is not 0 or 1")));
        }
        if r[1] < 0.0 || r[1].fract() != 0.0 {
            return Err(Error::Domain(format!("saccade count {} is not a count", r[1])));
        }
        Ok(FeatureVector {
            participant_id: participant_id.to_string(),
            window_start,
            sex_code: code as u8,
            label,
            saccade_count: r[1] as usize,
            v_mean: r[2],
            v_x_mean: r[3],
            v_y_mean: r[4],
            v_max: r[5],
            v_min: r[6],
            v_std: r[7],
            v_x_std: r[8],
            v_y_std: r[9],
            v_kurt: r[10],
            v_x_kurt: r[11],
            v_y_kurt: r[12],
            v_skew: r[13],
            v_x_skew: r[14],
            v_y_skew: r[15],
            degenerate: Degeneracy {
                magnitude: r[7] == 0.0,
                x: r[8] == 0.0,
                y: r[9] == 0.0,
            },
        })
    }
}

/// Why a window produced no feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSkip {
    TooFewSaccades { found: usize, required: usize },
    UnspecifiedSex,
}

impl fmt::Display for WindowSkip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowSkip::TooFewSaccades { found, required } => {
                write!(f, "{found} saccades, need {required}")
            }
            WindowSkip::UnspecifiedSex => f.write_str("learner sex unspecified"),
        }
    }
}

pub const DEFAULT_MIN_SACCADES: usize = 3;

/// Features over the saccades among `events`. Non-saccade events are ignored.
pub fn window_features(
    events: &[GazeEvent],
    meta: &LearnerMeta,
    label: ActivityLabel,
    window_start: i64,
    min_saccades: usize,
) -> std::result::Result<FeatureVector, WindowSkip> {
    let sex_code = meta.sex.code().ok_or(WindowSkip::UnspecifiedSex)?;
    let velocities: Vec<_> = events
        .iter()
        .filter(|e| e.kind == EventKind::Saccade)
        .filter_map(|e| saccade_velocity(e).ok())
        .collect();
    let required = min_saccades.max(1);
    if velocities.len() < required {
        return Err(WindowSkip::TooFewSaccades {
            found: velocities.len(),
            required,
        });
    }
    let col = |f: fn(&super::events::SaccadeVelocity) -> f64| -> Moments {
        let xs: Vec<f64> = velocities.iter().map(f).collect();
        moments(&xs).expect("non-empty")
    };
    let mag = col(|v| v.v);
    let vx = col(|v| v.v_x);
    let vy = col(|v| v.v_y);
    Ok(FeatureVector {
        participant_id: meta.participant_id.clone(),
        window_start,
        sex_code,
        label,
        saccade_count: velocities.len(),
        v_mean: mag.mean,
        v_x_mean: vx.mean,
        v_y_mean: vy.mean,
        v_max: mag.max,
        v_min: mag.min,
        v_std: mag.std,
        v_x_std: vx.std,
        v_y_std: vy.std,
        v_kurt: mag.kurtosis,
        v_x_kurt: vx.kurtosis,
        v_y_kurt: vy.kurtosis,
        v_skew: mag.skew,
        v_x_skew: vx.skew,
        v_y_skew: vy.skew,
        degenerate: Degeneracy {
            magnitude: mag.degenerate,
            x: vx.degenerate,
            y: vy.degenerate,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{GazePoint, Group, Sex};
    use proptest::prelude::*;

    /// Textbook two-pass formulas, no compensation, no sorting.
    fn oracle(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
        let (m2, m3, m4) = (m(2), m(3), m(4));
        (mean, m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let m = moments(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((m.mean, m.std, m.skew, m.kurtosis), (2.0, 0.0, 0.0, 0.0));
        assert!(m.degenerate);
    }

    #[test]
    fn one_to_four() {
        let m = moments(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        // sqrt(1.25)
        assert!((m.std - 1.118_033_988_749_895).abs() < 1e-12);
        assert!(m.skew.abs() < 1e-15);
        // m4 = (2*1.5^4 + 2*0.5^4)/4 = 2.5625; 2.5625/1.5625 - 3
        assert!((m.kurtosis - (2.5625 / 1.5625 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_formula_oracle() {
        let xs = [0.3, 1.7, 2.2, 0.9, 5.5, 3.1, 0.05, 2.8];
        let m = moments(&xs).unwrap();
        let (mean, std, skew, kurt) = oracle(&xs);
        assert!((m.mean - mean).abs() < 1e-12);
        assert!((m.std - std).abs() < 1e-12);
        assert!((m.skew - skew).abs() < 1e-12);
        assert!((m.kurtosis - kurt).abs() < 1e-12);
    }

    fn meta(sex: Sex) -> LearnerMeta {
        LearnerMeta {
            participant_id: "P".into(),
            sex,
            group: Group::G2,
            html_level: "basic".into(),
            academic_background: "CS".into(),
            learning_score: 0.0,
        }
    }

    fn saccade(sx: f64, sy: f64, ex: f64, ey: f64, d: u64) -> GazeEvent {
        GazeEvent {
            kind: EventKind::Saccade,
            event_index: 1,
            t_begin: 0,
            t_end: d as i64,
            duration: d,
            start_point: GazePoint::new(sx, sy),
            end_point: GazePoint::new(ex, ey),
            centroid: GazePoint::new(sx, sy),
            sample_count: 2,
            activity: None,
        }
    }

    #[test]
    fn window_requires_min_saccades_and_known_sex() {
        let evs = vec![saccade(0.0, 0.0, 10.0, 0.0, 10); 2];
        assert_eq!(
            window_features(&evs, &meta(Sex::F), ActivityLabel::Reading, 0, 3),
            Err(WindowSkip::TooFewSaccades { found: 2, required: 3 })
        );
        let evs = vec![saccade(0.0, 0.0, 10.0, 0.0, 10); 3];
        assert_eq!(
            window_features(&evs, &meta(Sex::Unspecified), ActivityLabel::Reading, 0, 3),
            Err(WindowSkip::UnspecifiedSex)
        );
        let fv = window_features(&evs, &meta(Sex::M), ActivityLabel::Reading, 0, 3).unwrap();
        assert_eq!(fv.sex_code, 1);
        assert_eq!(fv.v_mean, 1.0);
        assert!(fv.degenerate.magnitude && fv.degenerate.x);
        assert_eq!(FeatureVector::from_row("P", 0, fv.label, &fv.row()).unwrap(), fv);
    }

    fn arb_saccades() -> impl Strategy<Value = Vec<GazeEvent>> {
        prop::collection::vec(
            (0.0..1900.0f64, 0.0..1000.0f64, -200.0..200.0f64, -200.0..200.0f64, 10u64..80),
            3..40,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(x, y, dx, dy, d)| saccade(x, y, x + dx, y + dy, d))
                .collect()
        })
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    proptest! {
        #[test]
        fn features_are_permutation_invariant(evs in arb_saccades(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let a = window_features(&evs, &meta(Sex::F), ActivityLabel::VideoWatching, 0, 3).unwrap();
            let mut shuffled = evs.clone();
            shuffled.shuffle(&mut crate::seed::rng(seed));
            let b = window_features(&shuffled, &meta(Sex::F), ActivityLabel::VideoWatching, 0, 3).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn min_mean_max_ordered(evs in arb_saccades()) {
            let f = window_features(&evs, &meta(Sex::F), ActivityLabel::Reading, 0, 3).unwrap();
            prop_assert!(f.v_min <= f.v_mean && f.v_mean <= f.v_max);
        }

        #[test]
        fn translation_and_scale_behaviour(evs in arb_saccades(), ox in -500.0..500.0f64, oy in -500.0..500.0f64, c in 0.1..10.0f64) {
            let base = window_features(&evs, &meta(Sex::F), ActivityLabel::Reading, 0, 3).unwrap();
            let moved: Vec<GazeEvent> = evs.iter().map(|e| {
                saccade(e.start_point.x + ox, e.start_point.y + oy, e.end_point.x + ox, e.end_point.y + oy, e.duration)
            }).collect();
            let t = window_features(&moved, &meta(Sex::F), ActivityLabel::Reading, 0, 3).unwrap();
            let scaled: Vec<GazeEvent> = evs.iter().map(|e| {
                saccade(e.start_point.x * c, e.start_point.y * c, e.end_point.x * c, e.end_point.y * c, e.duration)
            }).collect();
            let s = window_features(&scaled, &meta(Sex::F), ActivityLabel::Reading, 0, 3).unwrap();
            let tol = 1e-9;
            for (a, b) in base.row().iter().zip(t.row().iter()) {
                prop_assert!(close(*a, *b, tol), "translation changed {a} -> {b}");
            }
            for (a, b) in [(base.v_mean, s.v_mean), (base.v_std, s.v_std), (base.v_max, s.v_max), (base.v_min, s.v_min), (base.v_x_mean, s.v_x_mean), (base.v_y_std, s.v_y_std)] {
                prop_assert!(close(a * c, b, tol));
            }
            if !base.degenerate.magnitude {
                prop_assert!(close(base.v_skew, s.v_skew, 1e-6));
                prop_assert!(close(base.v_kurt, s.v_kurt, 1e-6));
            }
        }
    }
}
