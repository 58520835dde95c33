//! Seeded synthetic sessions: gaze exports, session metadata and per-window
//! ground truth, in the same formats the ingest module reads.
//!
//! Each learner's stream is a sequence of cycles: a saccade, a fixation, and
//! an unclassified gap that pads the cycle to the configured saccade rate.
//! A cycle may instead be an eyes-not-found episode. Saccade frames move
//! linearly from the start to the end point, so the velocity recovered from
//! the first and last frame is exactly the drawn one.

use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::ActivityLabel;
use crate::ingest::{
    write_gaze_export, write_session_meta, ActivityId, ActivityInterval, GazePoint, GazeSample, Group, LearnerMeta,
    MovementType, SessionMeta, Sex,
};
use crate::seed;
use crate::stats::Factor;

/// Screen rectangle `[x0, y0, x1, y1]` in pixels.
pub type Region = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub saccade_rate_per_min: f64,
    /// Saccade speed in px/ms.
    pub velocity_mean: f64,
    pub velocity_std: f64,
    pub saccade_ms_mean: f64,
    pub saccade_ms_std: f64,
    pub fixation_ms_mean: f64,
    pub fixation_ms_std: f64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub activity: ActivityId,
    pub minutes: f64,
}

/// Mean shift applied to learners whose `factor` equals `level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub factor: Factor,
    pub level: String,
    #[serde(default)]
    pub fixation_ms: f64,
    #[serde(default)]
    pub saccade_rate_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub learners: usize,
    /// Relative sizes of G1, G2, G3.
    pub group_weights: [f64; 3],
    pub female_fraction: f64,
    pub script: Vec<ScriptStep>,
    pub sample_rate_hz: u32,
    pub screen_w: f64,
    pub screen_h: f64,
    pub video: Dynamics,
    pub reading: Dynamics,
    pub assignment: Dynamics,
    /// Share of cycles replaced by an eyes-not-found episode.
    pub eyes_not_found_rate: f64,
    /// Offsets are drawn from `[-max, 0]` ms.
    pub max_clock_offset_ms: i64,
    pub effects: Vec<Effect>,
    /// Window length of the emitted ground-truth labels.
    pub window_ms: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let step = |a: ActivityId, minutes: f64| ScriptStep { activity: a, minutes };
        SynthConfig {
            learners: 12,
            group_weights: [1.0, 1.0, 1.0],
            female_fraction: 0.5,
            script: vec![
                step(ActivityId::Video, 6.0),
                step(ActivityId::Reading, 6.0),
                step(ActivityId::Assignment, 4.0),
                step(ActivityId::Video, 6.0),
                step(ActivityId::Reading, 5.0),
                step(ActivityId::Assignment, 3.0),
            ],
            sample_rate_hz: 120,
            screen_w: 1920.0,
            screen_h: 1080.0,
            video: Dynamics {
                saccade_rate_per_min: 60.0,
                velocity_mean: 2.0,
                velocity_std: 0.5,
                saccade_ms_mean: 45.0,
                saccade_ms_std: 10.0,
                fixation_ms_mean: 420.0,
                fixation_ms_std: 100.0,
                region: [360.0, 140.0, 1560.0, 815.0],
            },
            reading: Dynamics {
                saccade_rate_per_min: 110.0,
                velocity_mean: 1.0,
                velocity_std: 0.5,
                saccade_ms_mean: 40.0,
                saccade_ms_std: 10.0,
                fixation_ms_mean: 250.0,
                fixation_ms_std: 60.0,
                region: [480.0, 100.0, 1440.0, 1000.0],
            },
            assignment: Dynamics {
                saccade_rate_per_min: 80.0,
                velocity_mean: 1.5,
                velocity_std: 0.5,
                saccade_ms_mean: 40.0,
                saccade_ms_std: 10.0,
                fixation_ms_mean: 320.0,
                fixation_ms_std: 80.0,
                region: [200.0, 150.0, 1720.0, 950.0],
            },
            eyes_not_found_rate: 0.02,
            max_clock_offset_ms: 0,
            effects: Vec::new(),
            window_ms: 30_000,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn dynamics(&self, a: &ActivityId) -> &Dynamics {
        match a {
            ActivityId::Video => &self.video,
            ActivityId::Reading => &self.reading,
            _ => &self.assignment,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.learners == 0 {
            return bad("no learners".into());
        }
        if self.group_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.group_weights.iter().sum::<f64>() <= 0.0 {
            return bad(format!("group weights {:?} are not proportions", self.group_weights));
        }
        if !(0.0..=1.0).contains(&self.female_fraction) {
            return bad(format!("female fraction {} outside [0, 1]", self.female_fraction));
        }
        if !(0.0..1.0).contains(&self.eyes_not_found_rate) {
            return bad(format!("eyes-not-found rate {} outside [0, 1)", self.eyes_not_found_rate));
        }
        if self.script.is_empty() || self.script.iter().any(|s| !(s.minutes.is_finite() && s.minutes > 0.0)) {
            return bad("activity script needs steps with positive length".into());
        }
        if self.sample_rate_hz == 0 || self.sample_rate_hz > 1000 {
            return bad(format!("sample rate {} Hz", self.sample_rate_hz));
        }
        if self.max_clock_offset_ms < 0 || self.window_ms <= 0 {
            return bad("clock offset bound and window length must be non-negative / positive".into());
        }
        for (name, d) in [("video", &self.video), ("reading", &self.reading), ("assignment", &self.assignment)] {
            let vals = [d.saccade_rate_per_min, d.velocity_mean, d.velocity_std, d.saccade_ms_mean, d.saccade_ms_std, d.fixation_ms_mean, d.fixation_ms_std];
            if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || d.saccade_rate_per_min == 0.0 {
                return bad(format!("{name} dynamics need finite non-negative values and a positive saccade rate"));
            }
            let [x0, y0, x1, y1] = d.region;
            if !(0.0 <= x0 && x0 < x1 && x1 <= self.screen_w && 0.0 <= y0 && y0 < y1 && y1 <= self.screen_h) {
                return bad(format!("{name} region {:?} is not inside the screen", d.region));
            }
        }
        Ok(())
    }
}

/// Label of one analysis window, as the dataset builder will cut it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthWindow {
    pub participant_id: String,
    pub window_start: i64,
    pub label: ActivityLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSession {
    /// One gaze stream per learner, sorted by participant id.
    pub streams: Vec<(String, Vec<GazeSample>)>,
    pub meta: SessionMeta,
    pub truth: Vec<TruthWindow>,
}

/// Split `n` by `weights` with largest remainders (ties to the lower index).
pub fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..weights.len()).collect();
    rest.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

fn learner_roster(cfg: &SynthConfig) -> Vec<LearnerMeta> {
    const HTML: [&str; 3] = ["basic", "intermediate", "advanced"];
    const BACKGROUND: [&str; 3] = ["engineering", "science", "humanities"];
    let per_group = apportion(cfg.learners, &cfg.group_weights);
    let mut out = Vec::with_capacity(cfg.learners);
    for (g, &count) in Group::ALL.iter().zip(&per_group) {
        let females = (count as f64 * cfg.female_fraction).round() as usize;
        for j in 0..count {
            let i = out.len();
            let mut rng = seed::derived_rng(cfg.seed, "roster", i as u64);
            out.push(LearnerMeta {
                participant_id: format!("P{:03}", i + 1),
                sex: if j < females { Sex::F } else { Sex::M },
                group: *g,
                html_level: HTML[j % 3].to_string(),
                academic_background: BACKGROUND[rng.random_range(0..3)].to_string(),
                learning_score: (rng.random_range(0.0..5.0f64) * 10.0).round() / 10.0,
            });
        }
    }
    out
}

fn effect_applies(e: &Effect, l: &LearnerMeta) -> bool {
    let level = match e.factor {
        Factor::Sex => l.sex.as_str(),
        Factor::Group => l.group.as_str(),
        Factor::HtmlLevel => l.html_level.as_str(),
    };
    level == e.level
}

/// Frame times in ms for `0..total_ms` at `rate` Hz.
fn frame_times(total_ms: i64, rate: u32) -> Vec<i64> {
    let mut out = Vec::new();
    let mut k: i64 = 0;
    loop {
        let t = k * 1000 / rate as i64;
        if t >= total_ms {
            return out;
        }
        out.push(t);
        k += 1;
    }
}

#[derive(Clone, Copy)]
enum Piece {
    Saccade { from: GazePoint, to: GazePoint },
    Fixation { at: GazePoint },
    Gap { at: GazePoint },
    Lost,
}

struct Span {
    t0: i64,
    t1: i64,
    piece: Piece,
}

fn inside(p: GazePoint, r: &Region) -> bool {
    r[0] <= p.x && p.x < r[2] && r[1] <= p.y && p.y < r[3]
}

fn clamp_to(p: GazePoint, r: &Region) -> GazePoint {
    GazePoint::new(p.x.clamp(r[0], r[2] - 1e-6), p.y.clamp(r[1], r[3] - 1e-6))
}

/// Gaze coordinates are emitted at 0.1 px resolution.
fn tenth(p: GazePoint) -> GazePoint {
    GazePoint::new((p.x * 10.0).round() / 10.0, (p.y * 10.0).round() / 10.0)
}

fn uniform_point(rng: &mut seed::Rng, r: &Region) -> GazePoint {
    GazePoint::new(rng.random_range(r[0]..r[2]), rng.random_range(r[1]..r[3]))
}

/// Saccade end point at distance `d` from `from` inside `r`. Directions are
/// redrawn until one fits; failing that, the saccade heads for the centre.
fn saccade_target(rng: &mut seed::Rng, from: GazePoint, d: f64, r: &Region) -> GazePoint {
    for _ in 0..64 {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let p = GazePoint::new(from.x + d * a.cos(), from.y + d * a.sin());
        if inside(p, r) {
            return p;
        }
    }
    let (cx, cy) = ((r[0] + r[2]) / 2.0, (r[1] + r[3]) / 2.0);
    let a = (cy - from.y).atan2(cx - from.x);
    clamp_to(GazePoint::new(from.x + d * a.cos(), from.y + d * a.sin()), r)
}

fn truncated(rng: &mut seed::Rng, mean: f64, std: f64, min: f64) -> f64 {
    let v = if std > 0.0 {
        Normal::new(mean, std).expect("validated std").sample(rng)
    } else {
        mean
    };
    v.max(min)
}

fn learner_spans(cfg: &SynthConfig, l: &LearnerMeta, intervals: &[ActivityInterval], rng: &mut seed::Rng) -> Vec<Span> {
    let total = intervals.last().map_or(0, |iv| iv.t_end);
    let frame_ms = 1000.0 / cfg.sample_rate_hz as f64;
    // two frames inside every event
    let min_event = (2.0 * frame_ms).ceil() + 1.0;
    let (mut fix_shift, mut rate_shift) = (0.0, 0.0);
    for e in cfg.effects.iter().filter(|e| effect_applies(e, l)) {
        fix_shift += e.fixation_ms;
        rate_shift += e.saccade_rate_per_min;
    }
    let mut spans = Vec::new();
    let mut pos = tenth(uniform_point(rng, &cfg.dynamics(&intervals[0].activity_id).region));
    let mut t: i64 = 0;
    let mut iv = 0;
    while t < total {
        while intervals[iv].t_end <= t {
            iv += 1;
        }
        let d = cfg.dynamics(&intervals[iv].activity_id);
        if !inside(pos, &d.region) {
            pos = tenth(uniform_point(rng, &d.region));
        }
        let cycle_mean = 60_000.0 / (d.saccade_rate_per_min + rate_shift).max(1.0);
        let cycle = truncated(rng, cycle_mean, 0.25 * cycle_mean, 2.0 * min_event).round() as i64;
        if rng.random_bool(cfg.eyes_not_found_rate) {
            spans.push(Span { t0: t, t1: t + cycle, piece: Piece::Lost });
            t += cycle;
            continue;
        }
        let sacc = truncated(rng, d.saccade_ms_mean, d.saccade_ms_std, min_event).round() as i64;
        let fix_room = (cycle - sacc).max(min_event as i64);
        let fix = (truncated(rng, d.fixation_ms_mean + fix_shift, d.fixation_ms_std, min_event).round() as i64).min(fix_room);
        let v = truncated(rng, d.velocity_mean, d.velocity_std, 0.05);
        let to = tenth(saccade_target(rng, pos, v * sacc as f64, &d.region));
        spans.push(Span { t0: t, t1: t + sacc, piece: Piece::Saccade { from: pos, to } });
        pos = to;
        spans.push(Span { t0: t + sacc, t1: t + sacc + fix, piece: Piece::Fixation { at: pos } });
        let end = t + sacc + fix;
        let cycle_end = (t + cycle).max(end);
        if cycle_end > end {
            spans.push(Span { t0: end, t1: cycle_end, piece: Piece::Gap { at: pos } });
        }
        t = cycle_end;
    }
    spans
}

fn render_frames(spans: &[Span], cfg: &SynthConfig, l: &LearnerMeta, offset: i64, start: (NaiveDate, NaiveTime), rng: &mut seed::Rng) -> Vec<GazeSample> {
    let total = spans.last().map_or(0, |s| s.t1);
    // t_abs = t_rec + offset with offset <= 0, so the recorder starts earlier
    let times: Vec<i64> = frame_times(total - offset, cfg.sample_rate_hz).into_iter().map(|t| t + offset).collect();
    let jitter = Normal::new(0.0, 2.0).expect("constant std");
    let mut out = Vec::with_capacity(times.len());
    let mut counters = [0u64; 4];
    let mut k = 0;
    for s in spans {
        let lo = k + times[k..].partition_point(|&t| t < s.t0);
        let hi = lo + times[lo..].partition_point(|&t| t < s.t1);
        let (kind, slot) = match s.piece {
            Piece::Fixation { .. } => (MovementType::Fixation, 0),
            Piece::Saccade { .. } => (MovementType::Saccade, 1),
            Piece::Gap { .. } => (MovementType::Unclassified, 2),
            Piece::Lost => (MovementType::EyesNotFound, 3),
        };
        if hi > lo {
            counters[slot] += 1;
        }
        for f in lo..hi {
            let gaze = match s.piece {
                Piece::Saccade { from, to } => {
                    if f == lo {
                        Some(from)
                    } else if f + 1 == hi {
                        Some(to)
                    } else {
                        let frac = (f - lo) as f64 / (hi - lo - 1) as f64;
                        Some(tenth(GazePoint::new(from.x + (to.x - from.x) * frac, from.y + (to.y - from.y) * frac)))
                    }
                }
                Piece::Fixation { at } | Piece::Gap { at } => {
                    let p = GazePoint::new(at.x + jitter.sample(rng), at.y + jitter.sample(rng));
                    Some(tenth(clamp_to(p, &[0.0, 0.0, cfg.screen_w - 0.1, cfg.screen_h - 0.1])))
                }
                Piece::Lost => None,
            };
            out.push(GazeSample {
                participant_id: l.participant_id.clone(),
                recording_date: start.0,
                recording_start: start.1,
                t_rec: (times[f] - offset) as u64,
                gaze,
                movement_type: kind,
                event_duration: (s.t1 - s.t0) as u64,
                event_index: counters[slot],
            });
        }
        k = hi;
    }
    out
}

fn script_intervals(cfg: &SynthConfig, pid: &str) -> Vec<ActivityInterval> {
    let mut t = 0i64;
    cfg.script
        .iter()
        .map(|s| {
            let len = (s.minutes * 60_000.0).round() as i64;
            let iv = ActivityInterval { participant_id: pid.to_string(), activity_id: s.activity.clone(), t_start: t, t_end: t + len };
            t += len;
            iv
        })
        .collect()
}

/// Windows the dataset builder cuts from reading and video intervals.
pub fn truth_windows(intervals: &[ActivityInterval], window_ms: i64) -> Vec<TruthWindow> {
    let mut out = Vec::new();
    for iv in intervals {
        let Some(label) = ActivityLabel::from_activity(&iv.activity_id) else {
            continue;
        };
        let mut s = iv.t_start;
        while s + window_ms <= iv.t_end {
            out.push(TruthWindow { participant_id: iv.participant_id.clone(), window_start: s, label });
            s += window_ms;
        }
    }
    out
}

pub fn generate_session(cfg: &SynthConfig, exec: Exec) -> Result<SynthSession> {
    cfg.validate()?;
    let roster = learner_roster(cfg);
    let day = NaiveDate::from_ymd_opt(2024, 3, 4).expect("valid date");
    let first = NaiveTime::from_hms_opt(9, 0, 0).expect("valid time");
    let per_learner = exec.map(&roster, |l| {
        let i: u64 = l.participant_id[1..].parse().expect("roster ids are numeric");
        let mut rng = seed::derived_rng(cfg.seed, "learner", i);
        let offset = if cfg.max_clock_offset_ms > 0 { -rng.random_range(0..=cfg.max_clock_offset_ms) } else { 0 };
        let intervals = script_intervals(cfg, &l.participant_id);
        let spans = learner_spans(cfg, l, &intervals, &mut rng);
        let start = first + Duration::minutes(40 * (i as i64 - 1));
        let frames = render_frames(&spans, cfg, l, offset, (day, start), &mut rng);
        (intervals, offset, frames)
    });
    let mut meta = SessionMeta { learners: roster.clone(), ..SessionMeta::default() };
    let mut streams = Vec::new();
    let mut truth = Vec::new();
    for (l, (intervals, offset, frames)) in roster.iter().zip(per_learner) {
        if cfg.max_clock_offset_ms > 0 {
            meta.clock_offsets.insert(l.participant_id.clone(), offset);
        }
        truth.extend(truth_windows(&intervals, cfg.window_ms));
        meta.intervals.extend(intervals);
        streams.push((l.participant_id.clone(), frames));
    }
    Ok(SynthSession { streams, meta, truth })
}

pub fn write_truth(truth: &[TruthWindow]) -> String {
    let mut s = String::from("participant_id\twindow_start_ms\tlabel\n");
    for w in truth {
        s.push_str(&format!("{}\t{}\t{}\n", w.participant_id, w.window_start, w.label));
    }
    s
}

pub const META_FILE: &str = "session_meta.tsv";
pub const TRUTH_FILE: &str = "ground_truth.tsv";

/// Write `<participant>.tsv` gaze exports, the metadata file and the
/// ground-truth labels into `dir`.
pub fn write_session_dir(session: &SynthSession, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (pid, frames) in &session.streams {
        let path = dir.join(format!("{pid}.tsv"));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_gaze_export(frames, std::io::BufWriter::new(file))?;
    }
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write(META_FILE, write_session_meta(&session.meta)?)?;
    write(TRUTH_FILE, write_truth(&session.truth))
}
