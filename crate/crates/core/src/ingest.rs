//! Eye-tracker export and session metadata ingestion.
//!
//! Gaze exports are delimited text (tab or comma, detected from the header
//! line) with one row per tracker frame. Session metadata is a tab-separated
//! record file, one learner or interval record per line:
//!
//! ```text
//! # comment
//! learner   <id> <sex F|M|U> <group G1|G2|G3> <html level> <background> <score> [clock offset ms]
//! interval  <id> <activity> <start ms> <end ms>
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";
pub const TIME_FORMAT: &str = "%H:%M:%S:%3f";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MovementType {
    Fixation,
    Saccade,
    Unclassified,
    EyesNotFound,
}

impl MovementType {
    pub fn as_str(self) -> &'static str {
        match self {
            MovementType::Fixation => "Fixation",
            MovementType::Saccade => "Saccade",
            MovementType::Unclassified => "Unclassified",
            MovementType::EyesNotFound => "EyesNotFound",
        }
    }

    /// Accepts the canonical spelling and the tracker's "Eyes Not Found".
    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "fixation" => Some(MovementType::Fixation),
            "saccade" => Some(MovementType::Saccade),
            "unclassified" => Some(MovementType::Unclassified),
            "eyesnotfound" => Some(MovementType::EyesNotFound),
            _ => None,
        }
    }

    pub fn is_event(self) -> bool {
        matches!(self, MovementType::Fixation | MovementType::Saccade)
    }
}

impl fmt::Display for MovementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Screen position in pixels, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub x: f64,
    pub y: f64,
}

impl GazePoint {
    pub fn new(x: f64, y: f64) -> Self {
        GazePoint { x, y }
    }
}

/// One tracker frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub participant_id: String,
    pub recording_date: NaiveDate,
    pub recording_start: NaiveTime,
    /// Milliseconds since the start of the recording.
    pub t_rec: u64,
    /// Absent when the tracker lost the eyes.
    pub gaze: Option<GazePoint>,
    pub movement_type: MovementType,
    pub event_duration: u64,
    pub event_index: u64,
}

/// Column headers of a gaze export. Defaults are the tracker's English headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub participant_id: String,
    pub recording_date: String,
    pub recording_start: String,
    pub timestamp: String,
    pub gaze_x: String,
    pub gaze_y: String,
    pub movement_type: String,
    pub event_duration: String,
    pub event_index: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            participant_id: "Participant ID".into(),
            recording_date: "Recording date".into(),
            recording_start: "Recording start time".into(),
            timestamp: "Recording timestamp".into(),
            gaze_x: "Gaze point X".into(),
            gaze_y: "Gaze point Y".into(),
            movement_type: "Eye movement type".into(),
            event_duration: "Gaze event duration".into(),
            event_index: "Eye movement type index".into(),
        }
    }
}

impl ColumnMap {
    fn names(&self) -> [&str; 9] {
        [
            &self.participant_id,
            &self.recording_date,
            &self.recording_start,
            &self.timestamp,
            &self.gaze_x,
            &self.gaze_y,
            &self.movement_type,
            &self.event_duration,
            &self.event_index,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub columns: ColumnMap,
    /// `None` detects tab or comma from the header line.
    pub delimiter: Option<char>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeParse {
    pub samples: Vec<GazeSample>,
    pub malformed: Vec<MalformedRow>,
}

fn decode_utf8(bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).map_err(|e| {
        let upto = e.utf8_error().valid_up_to();
        let line = 1 + e.as_bytes()[..upto].iter().filter(|&&b| b == b'\n').count() as u64;
        Error::Format {
            line,
            message: "input is not valid UTF-8".into(),
        }
    })
}

fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

fn parse_time(s: &str) -> Option<NaiveTime> {
    NaiveTime::parse_from_str(s, TIME_FORMAT)
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S%.3f"))
        .ok()
}

fn parse_row(rec: &csv::StringRecord, idx: &[usize; 9]) -> std::result::Result<GazeSample, String> {
    let field = |i: usize| rec.get(idx[i]).map(str::trim).unwrap_or("");
    let participant_id = field(0);
    if participant_id.is_empty() {
        return Err("empty participant id".into());
    }
    let recording_date = NaiveDate::parse_from_str(field(1), DATE_FORMAT)
        .map_err(|_| format!("bad recording date {:?}", field(1)))?;
    let recording_start =
        parse_time(field(2)).ok_or_else(|| format!("bad recording start time {:?}", field(2)))?;
    let t_rec: u64 = field(3)
        .parse()
        .map_err(|_| format!("bad recording timestamp {:?}", field(3)))?;
    let movement_type = MovementType::parse(field(6))
        .ok_or_else(|| format!("unknown eye movement type {:?}", field(6)))?;
    let event_duration: u64 = field(7)
        .parse()
        .map_err(|_| format!("bad gaze event duration {:?}", field(7)))?;
    let event_index: u64 = field(8)
        .parse()
        .map_err(|_| format!("bad eye movement type index {:?}", field(8)))?;
    if event_index < 1 {
        return Err("eye movement type index must be >= 1".into());
    }
    let gaze = match (field(4), field(5)) {
        ("", "") => None,
        (x, y) => {
            let x: f64 = x.parse().map_err(|_| format!("bad gaze x {x:?}"))?;
            let y: f64 = y.parse().map_err(|_| format!("bad gaze y {y:?}"))?;
            if !(x.is_finite() && y.is_finite()) {
                return Err("non-finite gaze point".into());
            }
            Some(GazePoint { x, y })
        }
    };
    if movement_type.is_event() && gaze.is_none() {
        return Err(format!("{movement_type} row without gaze point"));
    }
    Ok(GazeSample {
        participant_id: participant_id.to_string(),
        recording_date,
        recording_start,
        t_rec,
        gaze,
        movement_type,
        event_duration,
        event_index,
    })
}

/// Parse a gaze export.
///
/// Well-formed rows become samples in file order; malformed rows are skipped
/// and listed. A missing column is a schema error, and a timestamp or
/// per-type event index that goes backwards within a participant's stream is
/// a stream error naming the offending line.
pub fn parse_gaze_export<R: Read>(mut source: R, schema: &SchemaConfig) -> Result<GazeParse> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<gaze export>", e))?;
    let text = decode_utf8(bytes)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let header_line = text.lines().next().unwrap_or("");
    if header_line.trim().is_empty() {
        return Err(Error::Schema("missing header row".into()));
    }
    let delimiter = match schema.delimiter {
        Some(c) if c.is_ascii() => c as u8,
        Some(c) => return Err(Error::Config(format!("delimiter {c:?} is not ASCII"))),
        None => detect_delimiter(header_line),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(Ok(h)) => h,
        _ => return Err(Error::Schema("unreadable header row".into())),
    };
    let lookup: HashMap<String, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_lowercase(), i))
        .collect();
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(schema.columns.names()) {
        *slot = *lookup
            .get(&name.trim().to_lowercase())
            .ok_or_else(|| Error::Schema(format!("missing mandatory column {name:?}")))?;
    }

    let mut samples = Vec::new();
    let mut malformed = Vec::new();
    let mut last_t: HashMap<String, u64> = HashMap::new();
    let mut last_idx: HashMap<(String, MovementType), u64> = HashMap::new();
    for rec in records {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                malformed.push(MalformedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let sample = match parse_row(&rec, &idx) {
            Ok(s) => s,
            Err(reason) => {
                malformed.push(MalformedRow { line, reason });
                continue;
            }
        };
        let prev_t = last_t.entry(sample.participant_id.clone()).or_insert(0);
        if sample.t_rec < *prev_t {
            return Err(Error::Stream {
                line,
                message: format!(
                    "recording timestamp {} precedes previous {} for {}",
                    sample.t_rec, prev_t, sample.participant_id
                ),
            });
        }
        *prev_t = sample.t_rec;
        let key = (sample.participant_id.clone(), sample.movement_type);
        let prev_idx = last_idx.entry(key).or_insert(1);
        if sample.event_index < *prev_idx {
            return Err(Error::Stream {
                line,
                message: format!(
                    "{} index {} precedes previous {}",
                    sample.movement_type, sample.event_index, prev_idx
                ),
            });
        }
        *prev_idx = sample.event_index;
        samples.push(sample);
    }
    Ok(GazeParse { samples, malformed })
}

/// Write samples in the canonical export form: tab-separated, default
/// headers, shortest round-trip float formatting, empty gaze cells for
/// missing points.
pub fn write_gaze_export<W: Write>(samples: &[GazeSample], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let cols = ColumnMap::default();
    let to_err = |e: csv::Error| Error::io("<gaze export>", std::io::Error::other(e));
    w.write_record(cols.names()).map_err(to_err)?;
    for s in samples {
        let (x, y) = match s.gaze {
            Some(p) => (p.x.to_string(), p.y.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            s.participant_id.as_str(),
            &s.recording_date.format(DATE_FORMAT).to_string(),
            &s.recording_start.format(TIME_FORMAT).to_string(),
            &s.t_rec.to_string(),
            &x,
            &y,
            s.movement_type.as_str(),
            &s.event_duration.to_string(),
            &s.event_index.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<gaze export>", e))?;
    Ok(())
}

pub fn gaze_export_string(samples: &[GazeSample]) -> String {
    let mut buf = Vec::new();
    write_gaze_export(samples, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("export is UTF-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
    Unspecified,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::F => "F",
            Sex::M => "M",
            Sex::Unspecified => "U",
        }
    }

    /// 0/1 code in enum order; `None` for unspecified.
    pub fn code(self) -> Option<u8> {
        match self {
            Sex::F => Some(0),
            Sex::M => Some(1),
            Sex::Unspecified => None,
        }
    }
}

impl FromStr for Sex {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Sex::F),
            "m" | "male" => Ok(Sex::M),
            "u" | "unspecified" | "" => Ok(Sex::Unspecified),
            other => Err(format!("unknown sex {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    G1,
    G2,
    G3,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::G1, Group::G2, Group::G3];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::G1 => "G1",
            Group::G2 => "G2",
            Group::G3 => "G3",
        }
    }
}

impl FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().trim_start_matches('G') {
            "1" => Ok(Group::G1),
            "2" => Ok(Group::G2),
            "3" => Ok(Group::G3),
            _ => Err(format!("unknown group {s:?}")),
        }
    }
}

/// MOOC activity a learner is engaged in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ActivityId {
    Video,
    Reading,
    Assignment,
    Other(String),
}

impl ActivityId {
    pub fn as_str(&self) -> &str {
        match self {
            ActivityId::Video => "video",
            ActivityId::Reading => "reading",
            ActivityId::Assignment => "assignment",
            ActivityId::Other(s) => s,
        }
    }
}

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        if t.is_empty() || t.contains(['\t', '\n', '/']) {
            return Err(format!("invalid activity id {s:?}"));
        }
        Ok(match t.to_ascii_lowercase().as_str() {
            "video" => ActivityId::Video,
            "reading" => ActivityId::Reading,
            "assignment" => ActivityId::Assignment,
            _ => ActivityId::Other(t.to_string()),
        })
    }
}

impl From<ActivityId> for String {
    fn from(a: ActivityId) -> String {
        a.as_str().to_string()
    }
}

impl TryFrom<String> for ActivityId {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerMeta {
    pub participant_id: String,
    pub sex: Sex,
    pub group: Group,
    pub html_level: String,
    pub academic_background: String,
    /// Posttest minus pretest grade.
    pub learning_score: f64,
}

/// Half-open activity interval `[t_start, t_end)` in ms since the learner's
/// session epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub participant_id: String,
    pub activity_id: ActivityId,
    pub t_start: i64,
    pub t_end: i64,
}

impl ActivityInterval {
    pub fn duration_ms(&self) -> i64 {
        self.t_end - self.t_start
    }

    pub fn contains(&self, t: i64) -> bool {
        self.t_start <= t && t < self.t_end
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionMeta {
    /// Sorted by participant id.
    pub learners: Vec<LearnerMeta>,
    /// Sorted by participant id, then start time.
    pub intervals: Vec<ActivityInterval>,
    /// Metadata clock minus recorder clock, per learner; absent means 0.
    pub clock_offsets: BTreeMap<String, i64>,
}

impl SessionMeta {
    pub fn learner(&self, participant_id: &str) -> Option<&LearnerMeta> {
        self.learners
            .binary_search_by(|l| l.participant_id.as_str().cmp(participant_id))
            .ok()
            .map(|i| &self.learners[i])
    }

    pub fn intervals_for(&self, participant_id: &str) -> &[ActivityInterval] {
        let lo = self
            .intervals
            .partition_point(|iv| iv.participant_id.as_str() < participant_id);
        let hi = self
            .intervals
            .partition_point(|iv| iv.participant_id.as_str() <= participant_id);
        &self.intervals[lo..hi]
    }

    pub fn clock_offset(&self, participant_id: &str) -> i64 {
        self.clock_offsets.get(participant_id).copied().unwrap_or(0)
    }
}

fn meta_field_ok(s: &str) -> bool {
    !s.contains(['\t', '\n', '\r'])
}

/// Parse a session metadata file.
pub fn parse_session_meta<R: Read>(mut source: R) -> Result<SessionMeta> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<session metadata>", e))?;
    let text = decode_utf8(bytes)?;
    let mut learners: BTreeMap<String, LearnerMeta> = BTreeMap::new();
    let mut clock_offsets = BTreeMap::new();
    let mut intervals = Vec::new();
    let mut interval_lines = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        let bad = |message: String| Error::Format { line, message };
        match fields[0] {
            "learner" => {
                if !(7..=8).contains(&fields.len()) {
                    return Err(bad(format!(
                        "learner record needs 7 or 8 fields, found {}",
                        fields.len()
                    )));
                }
                let id = fields[1];
                if id.is_empty() {
                    return Err(bad("empty participant id".into()));
                }
                let meta = LearnerMeta {
                    participant_id: id.to_string(),
                    sex: fields[2].parse().map_err(bad)?,
                    group: fields[3].parse().map_err(bad)?,
                    html_level: fields[4].to_string(),
                    academic_background: fields[5].to_string(),
                    learning_score: fields[6]
                        .parse()
                        .map_err(|_| bad(format!("bad learning score {:?}", fields[6])))?,
                };
                if let Some(off) = fields.get(7) {
                    let off: i64 = off
                        .parse()
                        .map_err(|_| bad(format!("bad clock offset {off:?}")))?;
                    clock_offsets.insert(id.to_string(), off);
                }
                if learners.insert(id.to_string(), meta).is_some() {
                    return Err(Error::Conflict(format!(
                        "duplicate participant id {id:?} at line {line}"
                    )));
                }
            }
            "interval" => {
                if fields.len() != 5 {
                    return Err(bad(format!(
                        "interval record needs 5 fields, found {}",
                        fields.len()
                    )));
                }
                let t_start: i64 = fields[3]
                    .parse()
                    .map_err(|_| bad(format!("bad start time {:?}", fields[3])))?;
                let t_end: i64 = fields[4]
                    .parse()
                    .map_err(|_| bad(format!("bad end time {:?}", fields[4])))?;
                if t_start >= t_end {
                    return Err(Error::Interval(format!(
                        "line {line}: start {t_start} is not before end {t_end}"
                    )));
                }
                intervals.push(ActivityInterval {
                    participant_id: fields[1].to_string(),
                    activity_id: fields[2].parse().map_err(bad)?,
                    t_start,
                    t_end,
                });
                interval_lines.push(line);
            }
            other => return Err(bad(format!("unknown record kind {other:?}"))),
        }
    }
    for (iv, line) in intervals.iter().zip(&interval_lines) {
        if !learners.contains_key(&iv.participant_id) {
            return Err(Error::Conflict(format!(
                "interval at line {line} references unknown participant {:?}",
                iv.participant_id
            )));
        }
    }
    intervals.sort_by(|a, b| {
        (a.participant_id.as_str(), a.t_start, a.t_end).cmp(&(b.participant_id.as_str(), b.t_start, b.t_end))
    });
    Ok(SessionMeta {
        learners: learners.into_values().collect(),
        intervals,
        clock_offsets,
    })
}

/// Canonical metadata text; [`parse_session_meta`] reads it back unchanged.
pub fn write_session_meta(meta: &SessionMeta) -> Result<String> {
    let mut out = String::from("# kind\tparticipant\t...\n");
    for l in &meta.learners {
        for f in [&l.participant_id, &l.html_level, &l.academic_background] {
            if !meta_field_ok(f) {
                return Err(Error::Domain(format!("field {f:?} contains a tab or newline")));
            }
        }
        out.push_str(&format!(
            "learner\t{}\t{}\t{}\t{}\t{}\t{}",
            l.participant_id,
            l.sex.as_str(),
            l.group.as_str(),
            l.html_level,
            l.academic_background,
            l.learning_score
        ));
        if let Some(off) = meta.clock_offsets.get(&l.participant_id) {
            out.push_str(&format!("\t{off}"));
        }
        out.push('\n');
    }
    for iv in &meta.intervals {
        out.push_str(&format!(
            "interval\t{}\t{}\t{}\t{}\n",
            iv.participant_id, iv.activity_id, iv.t_start, iv.t_end
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub participant_id: String,
    pub total_samples: usize,
    pub eyes_not_found_fraction: f64,
    pub excluded: bool,
    pub reason: String,
}

pub const DEFAULT_EXCLUSION_THRESHOLD: f64 = 0.30;

/// Share of "eyes not found" frames and the exclusion verdict.
///
/// A learner is excluded when the share is strictly greater than
/// `threshold`, or when the stream is empty.
pub fn quality_filter(
    participant_id: &str,
    samples: &[GazeSample],
    threshold: f64,
) -> Result<QualityReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Domain(format!(
            "exclusion threshold {threshold} outside [0, 1]"
        )));
    }
    let total = samples.len();
    if total == 0 {
        return Ok(QualityReport {
            participant_id: participant_id.to_string(),
            total_samples: 0,
            eyes_not_found_fraction: 0.0,
            excluded: true,
            reason: "no data".into(),
        });
    }
    let missing = samples
        .iter()
        .filter(|s| s.movement_type == MovementType::EyesNotFound)
        .count();
    let fraction = missing as f64 / total as f64;
    let excluded = fraction > threshold;
    let reason = if excluded {
        format!("eyes-not-found fraction {fraction:.4} exceeds {threshold}")
    } else {
        String::new()
    };
    Ok(QualityReport {
        participant_id: participant_id.to_string(),
        total_samples: total,
        eyes_not_found_fraction: fraction,
        excluded,
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Participant ID\tRecording date\tRecording start time\tRecording timestamp\tGaze point X\tGaze point Y\tEye movement type\tGaze event duration\tEye movement type index\n";

    fn parse(text: &str) -> Result<GazeParse> {
        parse_gaze_export(text.as_bytes(), &SchemaConfig::default())
    }

    fn sample(t: u64, kind: MovementType) -> GazeSample {
        GazeSample {
            participant_id: "P1".into(),
            recording_date: NaiveDate::from_ymd_opt(2024, 3, 1).unwrap(),
            recording_start: NaiveTime::from_hms_milli_opt(10, 0, 0, 0).unwrap(),
            t_rec: t,
            gaze: kind.is_event().then_some(GazePoint::new(1.0, 2.0)),
            movement_type: kind,
            event_duration: 100,
            event_index: 1,
        }
    }

    #[test]
    fn parses_single_fixation_row() {
        let text = format!("{HEADER}P1\t2024-03-01\t10:15:30:250\t0\t960\t540\tFixation\t200\t1\n");
        let out = parse(&text).unwrap();
        assert!(out.malformed.is_empty());
        let s = &out.samples[0];
        assert_eq!(out.samples.len(), 1);
        assert_eq!(s.t_rec, 0);
        assert_eq!(s.movement_type, MovementType::Fixation);
        assert_eq!(s.event_index, 1);
        assert_eq!(s.event_duration, 200);
        assert_eq!(s.gaze, Some(GazePoint::new(960.0, 540.0)));
        assert_eq!(
            s.recording_start,
            NaiveTime::from_hms_milli_opt(10, 15, 30, 250).unwrap()
        );
    }

    #[test]
    fn eyes_not_found_row_has_no_gaze() {
        let text = format!("{HEADER}P1\t2024-03-01\t10:15:30:250\t0\t\t\tEyes Not Found\t50\t1\n");
        let out = parse(&text).unwrap();
        assert_eq!(out.samples[0].movement_type, MovementType::EyesNotFound);
        assert_eq!(out.samples[0].gaze, None);
    }

    #[test]
    fn comma_delimited_is_detected() {
        let text = HEADER.replace('\t', ",")
            + "P1,2024-03-01,10:15:30.250,5,1.5,2.5,Saccade,40,3\n";
        let out = parse(&text).unwrap();
        assert_eq!(out.samples[0].gaze, Some(GazePoint::new(1.5, 2.5)));
        assert_eq!(out.samples[0].event_index, 3);
    }

    #[test]
    fn backwards_timestamp_is_stream_error_with_line() {
        let mut text = HEADER.to_string();
        for t in [0, 17, 16] {
            text.push_str(&format!("P1\t2024-03-01\t10:00:00:000\t{t}\t1\t1\tFixation\t100\t1\n"));
        }
        match parse(&text) {
            Err(Error::Stream { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected stream error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = HEADER.replace("\tGaze point Y", "");
        assert!(matches!(parse(&text), Err(Error::Schema(_))));
        assert!(matches!(parse(""), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_rows_are_counted_not_fatal() {
        let text = format!(
            "{HEADER}P1\t2024-03-01\t10:00:00:000\t0\t1\t1\tFixation\t100\t1\n\
             P1\t2024-03-01\t10:00:00:000\tabc\t1\t1\tFixation\t100\t1\n\
             P1\t2024-03-01\t10:00:00:000\t10\t\t\tSaccade\t30\t1\n\
             P1\t2024-03-01\t10:00:00:000\t20\t1\t1\tBlink\t30\t1\n\
             P1\t2024-03-01\t10:00:00:000\t30\t1\t1\tFixation\t100\t0\n\
             P1\t2024-03-01\t10:00:00:000\t40\t1\t1\tFixation\t100\t2\n"
        );
        let out = parse(&text).unwrap();
        assert_eq!(out.samples.len(), 2);
        let lines: Vec<u64> = out.malformed.iter().map(|m| m.line).collect();
        assert_eq!(lines, vec![3, 4, 5, 6]);
    }

    #[test]
    fn custom_column_names() {
        let mut schema = SchemaConfig::default();
        schema.columns.participant_id = "Participant name".into();
        let text = HEADER.replace("Participant ID", "participant NAME")
            + "P9\t2024-03-01\t10:00:00:000\t0\t1\t1\tFixation\t100\t1\n";
        let out = parse_gaze_export(text.as_bytes(), &schema).unwrap();
        assert_eq!(out.samples[0].participant_id, "P9");
    }

    #[test]
    fn invalid_utf8_is_reported_not_panicking() {
        let mut bytes = HEADER.as_bytes().to_vec();
        bytes.extend_from_slice(b"P1\t\xff\n");
        assert!(matches!(
            parse_gaze_export(&bytes[..], &SchemaConfig::default()),
            Err(Error::Format { line: 2, .. })
        ));
    }

    #[test]
    fn canonical_export_round_trips() {
        let mut samples = vec![
            sample(0, MovementType::Fixation),
            sample(8, MovementType::EyesNotFound),
            sample(16, MovementType::Saccade),
        ];
        samples[0].gaze = Some(GazePoint::new(0.1 + 0.2, 1e-7));
        let text = gaze_export_string(&samples);
        let back = parse(&text).unwrap();
        assert_eq!(back.samples, samples);
    }

    const META: &str = "learner\tA\tF\tG1\tbasic\tCS\t1.5\n\
                        learner\tB\tM\tG2\tnone\tEE\t-0.5\t-200\n\
                        learner\tC\tU\tG3\tadvanced\tMath\t0\n\
                        interval\tA\treading\t10000\t20000\n\
                        interval\tA\tvideo\t0\t10000\n";

    #[test]
    fn session_meta_parses_and_sorts() {
        let meta = parse_session_meta(META.as_bytes()).unwrap();
        let groups: Vec<Group> = meta.learners.iter().map(|l| l.group).collect();
        assert_eq!(groups, vec![Group::G1, Group::G2, Group::G3]);
        let a = meta.intervals_for("A");
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].activity_id, ActivityId::Video);
        assert_eq!(a[0].t_end, a[1].t_start);
        assert_eq!(meta.clock_offset("B"), -200);
        assert_eq!(meta.clock_offset("A"), 0);
        assert!(meta.intervals_for("C").is_empty());
        let again = parse_session_meta(write_session_meta(&meta).unwrap().as_bytes()).unwrap();
        assert_eq!(again, meta);
    }

    #[test]
    fn session_meta_errors() {
        let dup = "learner\tA\tF\tG1\tb\tc\t0\nlearner\tA\tM\tG2\tb\tc\t0\n";
        assert!(matches!(parse_session_meta(dup.as_bytes()), Err(Error::Conflict(_))));
        let degenerate = "learner\tA\tF\tG1\tb\tc\t0\ninterval\tA\tvideo\t5000\t5000\n";
        assert!(matches!(
            parse_session_meta(degenerate.as_bytes()),
            Err(Error::Interval(_))
        ));
        let orphan = "interval\tZ\tvideo\t0\t10\n";
        assert!(matches!(parse_session_meta(orphan.as_bytes()), Err(Error::Conflict(_))));
        let junk = "learner\tA\n";
        assert!(matches!(
            parse_session_meta(junk.as_bytes()),
            Err(Error::Format { line: 1, .. })
        ));
    }

    fn stream(n: usize, missing: usize) -> Vec<GazeSample> {
        (0..n)
            .map(|i| {
                let kind = if i < missing {
                    MovementType::EyesNotFound
                } else {
                    MovementType::Fixation
                };
                sample(i as u64, kind)
            })
            .collect()
    }

    #[test]
    fn quality_threshold_is_strict() {
        let r = quality_filter("P1", &stream(100, 0), 0.30).unwrap();
        assert_eq!(r.eyes_not_found_fraction, 0.0);
        assert!(!r.excluded);
        let r = quality_filter("P1", &stream(100, 31), 0.30).unwrap();
        assert_eq!(r.eyes_not_found_fraction, 0.31);
        assert!(r.excluded);
        // 30/100 is not > 0.30; the division yields exactly the literal 0.3.
        let r = quality_filter("P1", &stream(100, 30), 0.30).unwrap();
        assert_eq!(30.0_f64 / 100.0, 0.30);
        assert!(!r.excluded);
    }

    #[test]
    fn quality_empty_and_domain() {
        let r = quality_filter("P1", &[], 0.3).unwrap();
        assert!(r.excluded);
        assert_eq!(r.reason, "no data");
        assert!(quality_filter("P1", &[], 1.5).is_err());
    }
}
