use std::io::{Read, Write};

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use super::events::{EventKind, GazeEvent};
use super::vector::{window_features, ActivityLabel, FeatureVector, WindowSkip, DEFAULT_MIN_SACCADES, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{ActivityInterval, Group, LearnerMeta, Sex};
use crate::seed;

/// Everything the dataset builder needs about one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSession {
    pub meta: LearnerMeta,
    pub intervals: Vec<ActivityInterval>,
    pub events: Vec<GazeEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub window_ms: i64,
    pub min_saccades: usize,
    /// Learner groups admitted to the dataset.
    pub groups: Vec<Group>,
    /// Undersample the majority class down to the minority count.
    pub balance: bool,
    /// Upper bound on samples per class, applied after balancing.
    pub class_cap: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            window_ms: 30_000,
            min_saccades: DEFAULT_MIN_SACCADES,
            groups: vec![Group::G2, Group::G3],
            balance: true,
            class_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub reading: usize,
    pub video_watching: usize,
}

impl ClassCounts {
    pub fn of(samples: &[FeatureVector]) -> Self {
        let video_watching = samples
            .iter()
            .filter(|s| s.label == ActivityLabel::VideoWatching)
            .count();
        ClassCounts {
            reading: samples.len() - video_watching,
            video_watching,
        }
    }

    pub fn total(&self) -> usize {
        self.reading + self.video_watching
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub participant_id: String,
    pub window_start: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetReport {
    pub learners_used: usize,
    pub learners_excluded: Vec<(String, String)>,
    pub windows_total: usize,
    pub skipped: Vec<SkippedWindow>,
    pub before_balancing: ClassCounts,
    pub after_balancing: ClassCounts,
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Ordered by participant id, then window start.
    pub samples: Vec<FeatureVector>,
    pub report: DatasetReport,
}

type LearnerWindows = (Vec<FeatureVector>, Vec<SkippedWindow>, usize);

fn learner_windows(s: &LearnerSession, window_ms: i64, min_saccades: usize) -> LearnerWindows {
    let mut saccades: Vec<&GazeEvent> = s
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Saccade)
        .collect();
    saccades.sort_by_key(|e| e.t_begin);
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    let mut total = 0;
    for iv in &s.intervals {
        let Some(label) = ActivityLabel::from_activity(&iv.activity_id) else {
            continue;
        };
        let mut start = iv.t_start;
        while start + window_ms <= iv.t_end {
            let end = start + window_ms;
            total += 1;
            let lo = saccades.partition_point(|e| e.t_begin < start);
            let hi = saccades.partition_point(|e| e.t_begin < end);
            let in_window: Vec<GazeEvent> = saccades[lo..hi].iter().map(|e| (*e).clone()).collect();
            match window_features(&in_window, &s.meta, label, start, min_saccades) {
                Ok(fv) => out.push(fv),
                Err(skip) => skipped.push(SkippedWindow {
                    participant_id: s.meta.participant_id.clone(),
                    window_start: start,
                    reason: skip.to_string(),
                }),
            }
            start = end;
        }
    }
    (out, skipped, total)
}

/// Cut every reading and video interval into consecutive fixed-length
/// windows (a trailing partial window is dropped), extract features, and
/// optionally balance the classes.
pub fn make_dataset(
    sessions: &[LearnerSession],
    cfg: &DatasetConfig,
    seed: u64,
    exec: Exec,
) -> Result<Dataset> {
    if cfg.window_ms <= 0 {
        return Err(Error::Config(format!("window length {} ms", cfg.window_ms)));
    }
    let mut report = DatasetReport::default();
    let mut admitted: Vec<&LearnerSession> = Vec::new();
    for s in sessions {
        let id = s.meta.participant_id.clone();
        if !cfg.groups.contains(&s.meta.group) {
            report
                .learners_excluded
                .push((id, format!("group {} not selected", s.meta.group.as_str())));
        } else if s.meta.sex == Sex::Unspecified {
            report.learners_excluded.push((id, WindowSkip::UnspecifiedSex.to_string()));
        } else {
            admitted.push(s);
        }
    }
    admitted.sort_by(|a, b| a.meta.participant_id.cmp(&b.meta.participant_id));
    report.learners_used = admitted.len();

    let per_learner = exec.map(&admitted, |s| learner_windows(s, cfg.window_ms, cfg.min_saccades));
    let mut samples = Vec::new();
    for (fvs, skipped, total) in per_learner {
        samples.extend(fvs);
        report.skipped.extend(skipped);
        report.windows_total += total;
    }
    report.before_balancing = ClassCounts::of(&samples);
    if report.before_balancing.reading == 0 || report.before_balancing.video_watching == 0 {
        return Err(Error::Dataset(format!(
            "a class is empty: {} reading, {} video watching",
            report.before_balancing.reading, report.before_balancing.video_watching
        )));
    }
    let samples = balance_classes(samples, cfg.balance, cfg.class_cap, seed)?;
    report.after_balancing = ClassCounts::of(&samples);
    report.balanced = report.after_balancing.reading == report.after_balancing.video_watching;
    Ok(Dataset { samples, report })
}

/// Randomly undersample classes. With `balance` both classes are cut to the
/// minority count; `cap` then bounds each class. Survivors keep their
/// original relative order.
pub fn balance_classes(
    samples: Vec<FeatureVector>,
    balance: bool,
    cap: Option<usize>,
    seed: u64,
) -> Result<Vec<FeatureVector>> {
    let counts = ClassCounts::of(&samples);
    if samples.is_empty() {
        return Err(Error::Dataset("no samples to balance".into()));
    }
    let mut keep = vec![true; samples.len()];
    for label in ActivityLabel::ALL {
        let members: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        let mut target = members.len();
        if balance {
            target = target.min(counts.reading.min(counts.video_watching));
        }
        if let Some(c) = cap {
            target = target.min(c);
        }
        if target == members.len() {
            continue;
        }
        let mut rng = seed::derived_rng(seed, "balance", label.index() as u64);
        let mut chosen = vec![false; members.len()];
        for j in sample_indices(&mut rng, members.len(), target) {
            chosen[j] = true;
        }
        for (m, c) in members.iter().zip(chosen) {
            keep[*m] = c;
        }
    }
    Ok(samples
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect())
}

/// Header of the dataset text format.
pub fn dataset_header() -> Vec<&'static str> {
    let mut h = vec!["participant_id", "window_start_ms", "sex", "label"];
    h.extend_from_slice(&FEATURE_NAMES[1..]);
    h
}

/// Tab-separated dataset export: two key columns, then sex, label and the
/// fifteen saccade features.
pub fn write_dataset<W: Write>(samples: &[FeatureVector], out: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::io("<dataset>", std::io::Error::other(e));
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(dataset_header()).map_err(to_err)?;
    for s in samples {
        let row = s.row();
        let mut rec = vec![
            s.participant_id.clone(),
            s.window_start.to_string(),
            s.sex_code.to_string(),
            s.label.to_string(),
        ];
        rec.extend(row[1..].iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<dataset>", e))?;
    Ok(())
}

pub fn read_dataset<R: Read>(source: R) -> Result<Vec<FeatureVector>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(source);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != dataset_header() {
        return Err(Error::Schema(format!("unexpected dataset header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |m: String| Error::Format { line, message: m };
        let window_start: i64 = rec[1].parse().map_err(|_| bad(format!("bad window start {:?}", &rec[1])))?;
        let label: ActivityLabel = rec[3].parse().map_err(bad)?;
        let mut row = [0.0; 16];
        row[0] = rec[2].parse().map_err(|_| bad(format!("bad sex code {:?}", &rec[2])))?;
        for (slot, field) in row[1..].iter_mut().zip(rec.iter().skip(4)) {
            *slot = field.parse().map_err(|_| bad(format!("bad number {field:?}")))?;
        }
        out.push(FeatureVector::from_row(&rec[0], window_start, label, &row).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ActivityId, GazePoint};
    use std::collections::HashSet;

    fn fv(i: usize, label: ActivityLabel) -> FeatureVector {
        FeatureVector::from_row(&format!("P{:03}", i / 50), i as i64, label, &{
            let mut r = [0.5; 16];
            r[0] = (i % 2) as f64;
            r[1] = 3.0 + (i % 7) as f64;
            r[2] = i as f64 * 0.01;
            r
        })
        .unwrap()
    }

    fn surplus(reading: usize, video: usize) -> Vec<FeatureVector> {
        (0..reading)
            .map(|i| fv(i, ActivityLabel::Reading))
            .chain((0..video).map(|i| fv(reading + i, ActivityLabel::VideoWatching)))
            .collect()
    }

    #[test]
    fn balancing_cuts_majority_to_minority() {
        let out = balance_classes(surplus(600, 524), true, None, 1).unwrap();
        assert_eq!(ClassCounts::of(&out), ClassCounts { reading: 524, video_watching: 524 });
        let out = balance_classes(surplus(600, 524), false, None, 1).unwrap();
        assert_eq!(ClassCounts::of(&out), ClassCounts { reading: 600, video_watching: 524 });
    }

    #[test]
    fn cap_bounds_both_classes() {
        let out = balance_classes(surplus(700, 900), false, Some(524), 3).unwrap();
        assert_eq!(ClassCounts::of(&out), ClassCounts { reading: 524, video_watching: 524 });
    }

    #[test]
    fn balancing_is_seed_deterministic() {
        let key = |v: &[FeatureVector]| v.iter().map(|s| s.window_start).collect::<Vec<_>>();
        let a = balance_classes(surplus(600, 524), true, None, 9).unwrap();
        let b = balance_classes(surplus(600, 524), true, None, 9).unwrap();
        let c = balance_classes(surplus(600, 524), true, None, 10).unwrap();
        assert_eq!(key(&a), key(&b));
        assert_ne!(key(&a), key(&c));
        assert_eq!(ClassCounts::of(&a), ClassCounts::of(&c));
        // order preserved
        assert!(key(&a).windows(2).all(|w| w[0] < w[1]));
        let distinct: HashSet<_> = key(&a).into_iter().collect();
        assert_eq!(distinct.len(), 1048);
    }

    #[test]
    fn dataset_text_round_trips() {
        let samples = surplus(5, 4);
        let mut buf = Vec::new();
        write_dataset(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("participant_id\twindow_start_ms\tsex\tlabel\tsaccade_number\tvelocity\t"));
        assert_eq!(read_dataset(&buf[..]).unwrap(), samples);
    }

    fn session(id: &str, group: Group, sex: Sex) -> LearnerSession {
        let mut events = Vec::new();
        // 2 saccades per second over 100 s
        for i in 0..200 {
            let t = i * 500;
            let speed = if t < 60_000 { 1.0 } else { 3.0 };
            events.push(GazeEvent {
                kind: EventKind::Saccade,
                event_index: i as u64 + 1,
                t_begin: t,
                t_end: t + 40,
                duration: 40,
                start_point: GazePoint::new(100.0, 100.0),
                end_point: GazePoint::new(100.0 + 40.0 * speed, 100.0 + (i % 3) as f64),
                centroid: GazePoint::new(100.0, 100.0),
                sample_count: 5,
                activity: None,
            });
        }
        let iv = |a, s, e| ActivityInterval { participant_id: id.into(), activity_id: a, t_start: s, t_end: e };
        LearnerSession {
            meta: LearnerMeta {
                participant_id: id.into(),
                sex,
                group,
                html_level: "basic".into(),
                academic_background: "CS".into(),
                learning_score: 1.0,
            },
            intervals: vec![
                iv(ActivityId::Reading, 0, 60_000),
                iv(ActivityId::Video, 60_000, 95_000),
                iv(ActivityId::Assignment, 95_000, 100_000),
            ],
            events,
        }
    }

    #[test]
    fn windows_cover_reading_and_video_only() {
        let sessions = vec![
            session("B", Group::G2, Sex::F),
            session("A", Group::G3, Sex::M),
            session("C", Group::G1, Sex::F),
            session("D", Group::G2, Sex::Unspecified),
        ];
        let cfg = DatasetConfig { window_ms: 10_000, balance: false, ..Default::default() };
        let ds = make_dataset(&sessions, &cfg, 0, Exec::default()).unwrap();
        assert_eq!(ds.report.learners_used, 2);
        assert_eq!(ds.report.learners_excluded.len(), 2);
        // reading 60 s -> 6 windows, video 35 s -> 3 windows (partial dropped)
        assert_eq!(ds.report.before_balancing, ClassCounts { reading: 12, video_watching: 6 });
        assert_eq!(ds.samples[0].participant_id, "A");
        assert_eq!(ds.samples[0].saccade_count, 20);
        assert!((ds.samples[0].v_mean - 1.0).abs() < 1e-3);
        let video = ds.samples.iter().find(|s| s.label == ActivityLabel::VideoWatching).unwrap();
        assert!(video.v_mean > 2.9);
        let seq = make_dataset(&sessions, &cfg, 0, Exec::Sequential).unwrap();
        assert_eq!(seq, ds);
        let balanced = make_dataset(&sessions, &DatasetConfig { window_ms: 10_000, ..Default::default() }, 0, Exec::default()).unwrap();
        assert_eq!(balanced.report.after_balancing, ClassCounts { reading: 6, video_watching: 6 });
        assert!(balanced.report.balanced);
    }

    #[test]
    fn empty_class_is_an_error() {
        let mut s = session("A", Group::G2, Sex::F);
        s.intervals.retain(|iv| iv.activity_id != ActivityId::Video);
        let r = make_dataset(&[s], &DatasetConfig::default(), 0, Exec::default());
        assert!(matches!(r, Err(Error::Dataset(_))));
    }
}
