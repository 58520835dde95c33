use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::events::{EventKind, GazeEvent};
use crate::error::{Error, Result};
use crate::ingest::{ActivityId, ActivityInterval};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileScope {
    Activity(ActivityId),
    WholeSession,
}

impl ProfileScope {
    pub fn label(&self) -> String {
        match self {
            ProfileScope::Activity(a) => a.to_string(),
            ProfileScope::WholeSession => "session".into(),
        }
    }
}

impl FromStr for ProfileScope {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "session" | "whole" | "whole_session" | "all" => Ok(ProfileScope::WholeSession),
            _ => Ok(ProfileScope::Activity(s.parse()?)),
        }
    }
}

/// The four attention parameters of one learner over one scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub participant_id: String,
    pub scope: ProfileScope,
    pub duration_ms: i64,
    pub saccade_count: usize,
    pub fixation_count: usize,
    /// Saccades per minute.
    pub avg_saccade_rate: f64,
    /// Fixations per minute.
    pub avg_fixation_rate: f64,
    /// Mean saccade duration, ms.
    pub avg_saccade_time: f64,
    /// Mean fixation duration, ms.
    pub avg_fixation_time: f64,
    pub saccades_empty: bool,
    pub fixations_empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileParam {
    AvgSaccadeRate,
    AvgFixationRate,
    AvgSaccadeTime,
    AvgFixationTime,
}

impl ProfileParam {
    pub const ALL: [ProfileParam; 4] = [
        ProfileParam::AvgSaccadeRate,
        ProfileParam::AvgFixationRate,
        ProfileParam::AvgSaccadeTime,
        ProfileParam::AvgFixationTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileParam::AvgSaccadeRate => "avg_saccade_rate",
            ProfileParam::AvgFixationRate => "avg_fixation_rate",
            ProfileParam::AvgSaccadeTime => "avg_saccade_time",
            ProfileParam::AvgFixationTime => "avg_fixation_time",
        }
    }

    pub fn value(self, p: &ActivityProfile) -> f64 {
        match self {
            ProfileParam::AvgSaccadeRate => p.avg_saccade_rate,
            ProfileParam::AvgFixationRate => p.avg_fixation_rate,
            ProfileParam::AvgSaccadeTime => p.avg_saccade_time,
            ProfileParam::AvgFixationTime => p.avg_fixation_time,
        }
    }
}

impl fmt::Display for ProfileParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileParam {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ProfileParam::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| format!("unknown parameter {s:?}"))
    }
}

/// Profile of the given events over `duration_ms`.
pub fn profile<'a, I>(
    participant_id: &str,
    scope: ProfileScope,
    events: I,
    duration_ms: i64,
) -> Result<ActivityProfile>
where
    I: IntoIterator<Item = &'a GazeEvent>,
{
    if duration_ms <= 0 {
        return Err(Error::Domain(format!(
            "profile over non-positive duration {duration_ms} ms"
        )));
    }
    let (mut ns, mut nf, mut ts, mut tf) = (0usize, 0usize, 0u64, 0u64);
    for e in events {
        match e.kind {
            EventKind::Saccade => {
                ns += 1;
                ts += e.duration;
            }
            EventKind::Fixation => {
                nf += 1;
                tf += e.duration;
            }
        }
    }
    let minutes = duration_ms as f64 / 60_000.0;
    let mean = |total: u64, n: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    Ok(ActivityProfile {
        participant_id: participant_id.to_string(),
        scope,
        duration_ms,
        saccade_count: ns,
        fixation_count: nf,
        avg_saccade_rate: ns as f64 / minutes,
        avg_fixation_rate: nf as f64 / minutes,
        avg_saccade_time: mean(ts, ns),
        avg_fixation_time: mean(tf, nf),
        saccades_empty: ns == 0,
        fixations_empty: nf == 0,
    })
}

/// Per-activity profiles (sorted by activity) followed by the whole-session
/// profile.
///
/// An activity's duration is the total length of its intervals. The whole
/// session counts every event, tagged or not, over the span covered by the
/// intervals and events together.
pub fn learner_profiles(
    participant_id: &str,
    events: &[GazeEvent],
    intervals: &[ActivityInterval],
) -> Result<Vec<ActivityProfile>> {
    let mut durations: BTreeMap<&ActivityId, i64> = BTreeMap::new();
    for iv in intervals {
        *durations.entry(&iv.activity_id).or_insert(0) += iv.duration_ms();
    }
    let mut out = Vec::with_capacity(durations.len() + 1);
    for (activity, duration) in &durations {
        let evs = events.iter().filter(|e| e.activity.as_ref() == Some(*activity));
        out.push(profile(
            participant_id,
            ProfileScope::Activity((*activity).clone()),
            evs,
            *duration,
        )?);
    }
    let starts = intervals.iter().map(|i| i.t_start).chain(events.iter().map(|e| e.t_begin));
    let ends = intervals.iter().map(|i| i.t_end).chain(events.iter().map(|e| e.t_end + 1));
    let span = match (starts.min(), ends.max()) {
        (Some(a), Some(b)) => b - a,
        _ => 0,
    };
    if span <= 0 {
        return Err(Error::Dataset(format!(
            "learner {participant_id} has neither events nor intervals"
        )));
    }
    out.push(profile(participant_id, ProfileScope::WholeSession, events, span)?);
    Ok(out)
}
