use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_from_confusion, Confusion, Metrics};
use super::model::Classifier;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{ActivityLabel, ClassCounts, FeatureRow, FeatureVector};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "split75_25")]
    Split75_25,
    #[serde(rename = "loocv")]
    Loocv,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Split75_25 => "split75_25",
            Protocol::Loocv => "loocv",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "split75_25" | "split" | "holdout" => Ok(Protocol::Split75_25),
            "loocv" => Ok(Protocol::Loocv),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

/// What a split or a left-out fold is made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    #[default]
    Sample,
    Learner,
}

impl FromStr for SplitUnit {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "sample" => Ok(SplitUnit::Sample),
            "learner" => Ok(SplitUnit::Learner),
            other => Err(format!("unknown split unit {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub protocol: Protocol,
    pub unit: SplitUnit,
    pub rounds: usize,
    pub n_samples: usize,
    pub class_counts: ClassCounts,
    pub balanced: bool,
    /// `[actual][predicted]`, Reading first.
    pub confusion: Confusion,
    pub metrics: Metrics,
    /// Held-out prediction per sample; `None` for training-only samples.
    pub predictions: Vec<Option<ActivityLabel>>,
}

/// Train/test index sets of one round.
struct Fold {
    train: Vec<usize>,
    test: Vec<usize>,
}

fn learner_ids(samples: &[FeatureVector]) -> Vec<&str> {
    let set: BTreeSet<&str> = samples.iter().map(|s| s.participant_id.as_str()).collect();
    set.into_iter().collect()
}

fn folds(samples: &[FeatureVector], protocol: Protocol, unit: SplitUnit, seed: u64) -> Result<Vec<Fold>> {
    let n = samples.len();
    let complement = |test: &[usize]| -> Vec<usize> {
        let mut held = vec![false; n];
        test.iter().for_each(|&i| held[i] = true);
        (0..n).filter(|&i| !held[i]).collect()
    };
    match (protocol, unit) {
        (Protocol::Loocv, SplitUnit::Sample) => Ok((0..n)
            .map(|i| Fold { train: (0..n).filter(|&j| j != i).collect(), test: vec![i] })
            .collect()),
        (Protocol::Loocv, SplitUnit::Learner) => {
            let ids = learner_ids(samples);
            if ids.len() < 2 {
                return Err(Error::Dataset("leave-one-learner-out needs two learners".into()));
            }
            Ok(ids
                .iter()
                .map(|id| {
                    let test: Vec<usize> = (0..n).filter(|&i| samples[i].participant_id == *id).collect();
                    Fold { train: complement(&test), test }
                })
                .collect())
        }
        (Protocol::Split75_25, SplitUnit::Sample) => {
            let mut test = Vec::new();
            for label in ActivityLabel::ALL {
                let mut members: Vec<usize> = (0..n).filter(|&i| samples[i].label == label).collect();
                members.shuffle(&mut seed::derived_rng(seed, "split", label.index() as u64));
                let k = ((members.len() as f64 * 0.25).round() as usize).clamp(1, members.len().saturating_sub(1));
                test.extend_from_slice(&members[..k]);
            }
            test.sort_unstable();
            Ok(vec![Fold { train: complement(&test), test }])
        }
        (Protocol::Split75_25, SplitUnit::Learner) => {
            let mut ids = learner_ids(samples);
            if ids.len() < 2 {
                return Err(Error::Dataset("a learner split needs two learners".into()));
            }
            ids.shuffle(&mut seed::derived_rng(seed, "split", 2));
            let k = ((ids.len() as f64 * 0.25).round() as usize).clamp(1, ids.len() - 1);
            let chosen: BTreeSet<&str> = ids[..k].iter().copied().collect();
            let test: Vec<usize> = (0..n).filter(|&i| chosen.contains(samples[i].participant_id.as_str())).collect();
            Ok(vec![Fold { train: complement(&test), test }])
        }
    }
}

/// Evaluate a classifier under a protocol.
///
/// Round seeds are derived up front from `seed`, so parallel and sequential
/// execution give identical reports.
pub fn evaluate(
    classifier: &dyn Classifier,
    samples: &[FeatureVector],
    protocol: Protocol,
    unit: SplitUnit,
    seed: u64,
    exec: Exec,
) -> Result<EvalReport> {
    if samples.len() < 4 {
        return Err(Error::Dataset(format!("evaluation needs at least 4 samples, got {}", samples.len())));
    }
    let rows: Vec<FeatureRow> = samples.iter().map(FeatureVector::row).collect();
    let labels: Vec<ActivityLabel> = samples.iter().map(|s| s.label).collect();
    let folds = folds(samples, protocol, unit, seed)?;
    let round_seeds: Vec<u64> = (0..folds.len()).map(|r| seed::derive(seed, "round", r as u64)).collect();
    // Many rounds: parallelize across rounds. One round: inside training.
    let (outer, inner) = if folds.len() > 1 { (exec, Exec::Sequential) } else { (Exec::Sequential, exec) };
    let per_round = outer.try_map_range(folds.len(), |r| -> Result<Vec<(usize, ActivityLabel)>> {
        let f = &folds[r];
        let x: Vec<FeatureRow> = f.train.iter().map(|&i| rows[i]).collect();
        let y: Vec<ActivityLabel> = f.train.iter().map(|&i| labels[i]).collect();
        let model = classifier.fit(&x, &y, round_seeds[r], inner)?;
        Ok(f.test.iter().map(|&i| (i, model.predict(&rows[i]).label)).collect())
    })?;
    let mut predictions = vec![None; samples.len()];
    let mut confusion: Confusion = [[0; 2]; 2];
    for (i, p) in per_round.into_iter().flatten() {
        if predictions[i].replace(p).is_some() {
            return Err(Error::Dataset(format!("sample {i} predicted twice")));
        }
        confusion[labels[i].index()][p.index()] += 1;
    }
    let class_counts = ClassCounts::of(samples);
    Ok(EvalReport {
        model: classifier.name(),
        protocol,
        unit,
        rounds: folds.len(),
        n_samples: samples.len(),
        balanced: class_counts.reading == class_counts.video_watching,
        class_counts,
        metrics: metrics_from_confusion(&confusion)?,
        confusion,
        predictions,
    })
}

/// Side-by-side metrics table, one column per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let w = reports.iter().map(|r| r.model.len()).max().unwrap_or(0).max(8);
    let mut s = String::new();
    let _ = write!(s, "{:<26}", "");
    for r in reports {
        let _ = write!(s, "  {:>w$}", r.model);
    }
    s.push('\n');
    let mut row = |group: &str, name: &str, f: &dyn Fn(&EvalReport) -> f64| {
        let _ = write!(s, "{group:<15}{name:<11}");
        for r in reports {
            let _ = write!(s, "  {:>w$.2}", f(r));
        }
        s.push('\n');
    };
    row("Accuracy test", "", &|r| r.metrics.accuracy);
    for (label, title) in [(ActivityLabel::VideoWatching, "Video watching"), (ActivityLabel::Reading, "Reading")] {
        row(title, "Precision", &|r| r.metrics.class(label).precision);
        row("", "Recall", &|r| r.metrics.class(label).recall);
        row("", "F1-Score", &|r| r.metrics.class(label).f1);
    }
    if let Some(r) = reports.first() {
        let unit = match r.unit {
            SplitUnit::Sample => "sample",
            SplitUnit::Learner => "learner",
        };
        let _ = writeln!(
            s,
            "protocol {} by {unit}, {} samples ({} reading, {} video watching{})",
            r.protocol,
            r.n_samples,
            r.class_counts.reading,
            r.class_counts.video_watching,
            if r.balanced { ", balanced" } else { ", unbalanced" }
        );
    }
    s
}
