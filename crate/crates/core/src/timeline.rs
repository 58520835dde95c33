//! Clock normalization and activity tagging.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ActivityId, ActivityInterval, GazeSample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEpoch {
    pub participant_id: String,
    pub epoch: NaiveDateTime,
    /// Metadata clock minus recorder clock.
    pub clock_offset_ms: i64,
}

impl SessionEpoch {
    pub fn from_sample(sample: &GazeSample, clock_offset_ms: i64) -> Self {
        SessionEpoch {
            participant_id: sample.participant_id.clone(),
            epoch: sample.recording_date.and_time(sample.recording_start),
            clock_offset_ms,
        }
    }
}

/// Milliseconds since the session epoch on the metadata clock.
pub fn normalize_time(sample: &GazeSample, epoch: &SessionEpoch) -> i64 {
    sample.t_rec as i64 + epoch.clock_offset_ms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSample {
    pub sample: GazeSample,
    pub t_abs: i64,
    /// `None` when the sample falls in no activity interval.
    pub activity: Option<ActivityId>,
}

/// Check intervals are well formed, sorted and pairwise disjoint.
pub fn validate_intervals(intervals: &[ActivityInterval]) -> Result<()> {
    for iv in intervals {
        if iv.t_start >= iv.t_end {
            return Err(Error::Config(format!(
                "interval [{}, {}) for {} is empty",
                iv.t_start, iv.t_end, iv.participant_id
            )));
        }
    }
    for pair in intervals.windows(2) {
        if pair[1].t_start < pair[0].t_end {
            return Err(Error::Config(format!(
                "intervals [{}, {}) and [{}, {}) overlap or are unsorted",
                pair[0].t_start, pair[0].t_end, pair[1].t_start, pair[1].t_end
            )));
        }
    }
    Ok(())
}

/// Index of the interval containing each time, or `None`.
///
/// Linear merge for non-decreasing times; a step backwards re-seeks by
/// binary search, so arbitrary orders still tag correctly.
pub fn locate<I>(times: I, intervals: &[ActivityInterval]) -> Vec<Option<usize>>
where
    I: IntoIterator<Item = i64>,
{
    let mut cursor = 0usize;
    let mut prev = i64::MIN;
    times
        .into_iter()
        .map(|t| {
            if t < prev {
                cursor = intervals.partition_point(|iv| iv.t_end <= t);
            }
            prev = t;
            while cursor < intervals.len() && intervals[cursor].t_end <= t {
                cursor += 1;
            }
            match intervals.get(cursor) {
                Some(iv) if iv.t_start <= t => Some(cursor),
                _ => None,
            }
        })
        .collect()
}

/// Tag every sample with the activity whose half-open interval contains its
/// normalized time. Output order equals input order.
pub fn tag_samples(
    samples: &[GazeSample],
    intervals: &[ActivityInterval],
    clock_offset_ms: i64,
) -> Result<Vec<TaggedSample>> {
    validate_intervals(intervals)?;
    let epoch_of = |s: &GazeSample| SessionEpoch::from_sample(s, clock_offset_ms);
    let times: Vec<i64> = samples
        .iter()
        .map(|s| normalize_time(s, &epoch_of(s)))
        .collect();
    let hits = locate(times.iter().copied(), intervals);
    Ok(samples
        .iter()
        .zip(times)
        .zip(hits)
        .map(|((s, t_abs), hit)| TaggedSample {
            sample: s.clone(),
            t_abs,
            activity: hit.map(|i| intervals[i].activity_id.clone()),
        })
        .collect())
}

/// Maximal run of samples sharing one tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub activity: Option<ActivityId>,
    /// Normalized time of the first sample.
    pub t_start: i64,
    /// Normalized time of the last sample (inclusive).
    pub t_end: i64,
    /// Index of the first sample in the tagged stream.
    pub first: usize,
    pub sample_count: usize,
}

pub fn segmentize(tagged: &[TaggedSample]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, s) in tagged.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.activity == s.activity => {
                seg.t_end = s.t_abs;
                seg.sample_count += 1;
            }
            _ => out.push(Segment {
                activity: s.activity.clone(),
                t_start: s.t_abs,
                t_end: s.t_abs,
                first: i,
                sample_count: 1,
            }),
        }
    }
    out
}
