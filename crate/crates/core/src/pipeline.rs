//! Store-backed pipeline steps: each reads its inputs from the store and
//! writes its outputs back, so steps can be run and re-run independently.
//!
//! Record names used per session:
//!
//! | kind      | participant | name                              |
//! |-----------|-------------|-----------------------------------|
//! | meta      | -           | `session_meta`                    |
//! | source    | learner     | `source`                          |
//! | quality   | learner     | `quality`                         |
//! | events    | learner     | `events`                          |
//! | profile   | learner     | scope (`video`, ..., `session`)   |
//! | anova     | -           | `<parameter>.<factor>.<scope>`    |
//! | heatmap   | learner     | activity or `all`                 |
//! | dataset   | -           | `dataset`                         |
//! | model     | -           | `rf`, `mlp`                       |
//! | report    | -           | `<model>.<protocol>.<unit>`       |

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{
    collect_events, learner_profiles, make_dataset, ActivityProfile, Dataset, EventReport, GazeEvent, LearnerSession,
    ProfileParam, ProfileScope,
};
use crate::heatmap::{accumulate, smooth, HeatmapGrid};
use crate::ingest::{parse_gaze_export, parse_session_meta, quality_filter, ActivityId, LearnerMeta, MalformedRow, QualityReport, SessionMeta};
use crate::ml::{evaluate, train, EvalReport, Learner, Model, ModelKind, Protocol, SplitUnit};
use crate::seed;
use crate::stats::{anova_by_level, AnovaResult, Factor};
use crate::store::{Key, Kind, Store};
use crate::timeline::tag_samples;

pub const META_NAME: &str = "session_meta";
pub const DATASET_NAME: &str = "dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub participant_id: String,
    /// Name of the stored raw export.
    pub file: String,
    pub sha256: String,
    pub samples: usize,
    /// Malformed rows of the whole file.
    pub malformed: Vec<MalformedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsRecord {
    pub participant_id: String,
    pub clock_offset_ms: i64,
    pub samples: usize,
    pub untagged_samples: usize,
    pub events: Vec<GazeEvent>,
    pub report: EventReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredModel {
    pub kind: ModelKind,
    pub seed: u64,
    pub trained_on: usize,
    /// Portable text form, see [`Model::to_text`].
    pub text: String,
}

impl StoredModel {
    pub fn model(&self) -> Result<Model> {
        Model::from_text(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files: usize,
    pub samples: usize,
    pub malformed_rows: usize,
    pub learners: usize,
    pub excluded: Vec<String>,
}

pub fn load_meta(store: &Store, session: &str) -> Result<SessionMeta> {
    store.get(Kind::Meta, &Key::session(session, META_NAME))
}

/// Ingest a metadata file and gaze exports into `session`.
///
/// Exports are kept verbatim in the store. Each participant gets a source
/// record and a quality report; learners listed in the metadata without
/// any export are reported as excluded for lack of data.
pub fn ingest(store: &Store, session: &str, meta_path: &Path, exports: &[impl AsRef<Path>], cfg: &Config) -> Result<IngestSummary> {
    let meta_bytes = std::fs::read(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta = parse_session_meta(meta_bytes.as_slice())?;
    store.put(Kind::Meta, &Key::session(session, META_NAME), &meta)?;
    let mut summary = IngestSummary { learners: meta.learners.len(), ..Default::default() };
    let mut seen: BTreeMap<String, ()> = BTreeMap::new();
    let mut files: Vec<&Path> = exports.iter().map(AsRef::as_ref).collect();
    files.sort();
    for path in files {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let parsed = parse_gaze_export(bytes.as_slice(), &cfg.schema)?;
        let file = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Config(format!("export path {} has no file name", path.display())))?
            .to_string();
        let sha256 = store.put_blob(session, &file, &bytes)?;
        summary.files += 1;
        summary.samples += parsed.samples.len();
        summary.malformed_rows += parsed.malformed.len();
        let mut by_pid: BTreeMap<&str, Vec<&crate::ingest::GazeSample>> = BTreeMap::new();
        for s in &parsed.samples {
            by_pid.entry(s.participant_id.as_str()).or_default().push(s);
        }
        for (pid, samples) in by_pid {
            if meta.learner(pid).is_none() {
                return Err(Error::Conflict(format!("export {file} has participant {pid} missing from the metadata")));
            }
            if seen.insert(pid.to_string(), ()).is_some() {
                return Err(Error::Conflict(format!("participant {pid} appears in more than one export")));
            }
            let owned: Vec<_> = samples.into_iter().cloned().collect();
            let quality = quality_filter(pid, &owned, cfg.exclusion_threshold)?;
            if quality.excluded {
                summary.excluded.push(pid.to_string());
            }
            store.put(Kind::Quality, &Key::learner(session, pid, "quality"), &quality)?;
            let source = SourceRecord {
                participant_id: pid.to_string(),
                file: file.clone(),
                sha256: sha256.clone(),
                samples: owned.len(),
                malformed: parsed.malformed.clone(),
            };
            store.put(Kind::Source, &Key::learner(session, pid, "source"), &source)?;
        }
    }
    for l in &meta.learners {
        if !seen.contains_key(&l.participant_id) {
            let q = quality_filter(&l.participant_id, &[], cfg.exclusion_threshold)?;
            store.put(Kind::Quality, &Key::learner(session, &l.participant_id, "quality"), &q)?;
            summary.excluded.push(l.participant_id.clone());
        }
    }
    summary.excluded.sort();
    Ok(summary)
}

fn included_learners(store: &Store, session: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for key in store.list(Kind::Quality, session)? {
        let q: QualityReport = store.get(Kind::Quality, &key)?;
        if !q.excluded {
            out.push(q.participant_id);
        }
    }
    Ok(out)
}

/// Tag every included learner's samples and assemble their events.
pub fn tag(store: &Store, session: &str, cfg: &Config) -> Result<Vec<EventsRecord>> {
    let meta = load_meta(store, session)?;
    let learners = included_learners(store, session)?;
    let records = cfg.exec.try_map_range(learners.len(), |i| -> Result<EventsRecord> {
        let pid = &learners[i];
        let src: SourceRecord = store.get(Kind::Source, &Key::learner(session, pid, "source"))?;
        let bytes = store.get_blob(session, &src.file, Some(&src.sha256))?;
        let parsed = parse_gaze_export(bytes.as_slice(), &cfg.schema)?;
        let samples: Vec<_> = parsed.samples.into_iter().filter(|s| &s.participant_id == pid).collect();
        let offset = meta.clock_offset(pid);
        let tagged = tag_samples(&samples, meta.intervals_for(pid), offset)?;
        let untagged = tagged.iter().filter(|t| t.activity.is_none()).count();
        let (events, report) = collect_events(&tagged);
        Ok(EventsRecord {
            participant_id: pid.clone(),
            clock_offset_ms: offset,
            samples: samples.len(),
            untagged_samples: untagged,
            events,
            report,
        })
    })?;
    for r in &records {
        store.put(Kind::Events, &Key::learner(session, &r.participant_id, "events"), r)?;
    }
    Ok(records)
}

fn load_events(store: &Store, session: &str) -> Result<Vec<EventsRecord>> {
    store.list(Kind::Events, session)?.iter().map(|k| store.get(Kind::Events, k)).collect()
}

/// Attention profiles per learner: one per activity and one for the session.
pub fn features(store: &Store, session: &str) -> Result<Vec<ActivityProfile>> {
    let meta = load_meta(store, session)?;
    let mut out = Vec::new();
    for rec in load_events(store, session)? {
        let profiles = learner_profiles(&rec.participant_id, &rec.events, meta.intervals_for(&rec.participant_id))?;
        for p in &profiles {
            store.put(Kind::Profile, &Key::learner(session, &p.participant_id, &p.scope.label()), p)?;
        }
        out.extend(profiles);
    }
    Ok(out)
}

pub fn load_profiles(store: &Store, session: &str) -> Result<Vec<ActivityProfile>> {
    store.list(Kind::Profile, session)?.iter().map(|k| store.get(Kind::Profile, k)).collect()
}

/// Level of a learner under a factor.
pub fn factor_level(l: &LearnerMeta, factor: Factor) -> String {
    match factor {
        Factor::Sex => l.sex.as_str().to_string(),
        Factor::Group => l.group.as_str().to_string(),
        Factor::HtmlLevel => l.html_level.clone(),
    }
}

pub fn anova_name(param: ProfileParam, factor: Factor, scope: &ProfileScope) -> String {
    format!("{}.{}.{}", param.as_str(), factor.as_str(), scope.label())
}

/// One-way ANOVA of a profile parameter across the levels of a factor.
pub fn anova(store: &Store, session: &str, param: ProfileParam, factor: Factor, scope: &ProfileScope, cfg: &Config) -> Result<AnovaResult> {
    let meta = load_meta(store, session)?;
    let mut obs = Vec::new();
    for p in load_profiles(store, session)?.iter().filter(|p| &p.scope == scope) {
        let l = meta
            .learner(&p.participant_id)
            .ok_or_else(|| Error::Conflict(format!("profile for unknown learner {}", p.participant_id)))?;
        obs.push((factor_level(l, factor), param.value(p)));
    }
    if obs.is_empty() {
        return Err(Error::NotFound(format!("no {} profiles in session {session}", scope.label())));
    }
    let result = anova_by_level(param.as_str(), factor, &scope.label(), &obs, cfg.anova.alpha)?;
    store.put(Kind::Anova, &Key::session(session, &anova_name(param, factor, scope)), &result)?;
    Ok(result)
}

/// Smoothed fixation heatmap per included learner and activity filter.
pub fn heatmaps(store: &Store, session: &str, activity: Option<&ActivityId>, cfg: &Config) -> Result<Vec<HeatmapGrid>> {
    let records = load_events(store, session)?;
    let grids = cfg.exec.try_map_range(records.len(), |i| -> Result<HeatmapGrid> {
        let r = &records[i];
        let raw = accumulate(&r.participant_id, &r.events, activity, &cfg.heatmap)?;
        smooth(&raw, cfg.heatmap.sigma_cells)
    })?;
    let name = activity.map_or("all", ActivityId::as_str);
    for g in &grids {
        store.put(Kind::Heatmap, &Key::learner(session, &g.participant_id, name), g)?;
    }
    Ok(grids)
}

/// Windowed saccade-velocity dataset over the included learners.
pub fn dataset(store: &Store, session: &str, cfg: &Config) -> Result<Dataset> {
    let meta = load_meta(store, session)?;
    let sessions: Vec<LearnerSession> = load_events(store, session)?
        .into_iter()
        .map(|r| -> Result<LearnerSession> {
            let m = meta
                .learner(&r.participant_id)
                .ok_or_else(|| Error::Conflict(format!("events for unknown learner {}", r.participant_id)))?;
            Ok(LearnerSession {
                meta: m.clone(),
                intervals: meta.intervals_for(&r.participant_id).to_vec(),
                events: r.events,
            })
        })
        .collect::<Result<_>>()?;
    let ds = make_dataset(&sessions, &cfg.dataset, seed::derive(cfg.seed, "dataset", 0), cfg.exec)?;
    store.put(Kind::Dataset, &Key::session(session, DATASET_NAME), &ds)?;
    Ok(ds)
}

pub fn load_dataset(store: &Store, session: &str) -> Result<Dataset> {
    store.get(Kind::Dataset, &Key::session(session, DATASET_NAME))
}

/// Train on the whole stored dataset.
pub fn train_model(store: &Store, session: &str, kind: ModelKind, cfg: &Config) -> Result<StoredModel> {
    let ds = load_dataset(store, session)?;
    let x: Vec<_> = ds.samples.iter().map(|s| s.row()).collect();
    let y: Vec<_> = ds.samples.iter().map(|s| s.label).collect();
    let model_seed = seed::derive(cfg.seed, "train", kind as u64);
    let model = train(kind, &cfg.models, &x, &y, model_seed, cfg.exec)?;
    let stored = StoredModel { kind, seed: model_seed, trained_on: x.len(), text: model.to_text() };
    store.put(Kind::Model, &Key::session(session, kind.as_str()), &stored)?;
    Ok(stored)
}

pub fn report_name(kind: ModelKind, protocol: Protocol, unit: SplitUnit) -> String {
    let unit = match unit {
        SplitUnit::Sample => "sample",
        SplitUnit::Learner => "learner",
    };
    format!("{}.{}.{unit}", kind.as_str(), protocol.as_str())
}

pub fn evaluate_model(store: &Store, session: &str, kind: ModelKind, protocol: Protocol, unit: SplitUnit, cfg: &Config) -> Result<EvalReport> {
    let ds = load_dataset(store, session)?;
    let learner = Learner { kind, config: cfg.models.clone() };
    let report = evaluate(&learner, &ds.samples, protocol, unit, seed::derive(cfg.seed, "evaluate", kind as u64), cfg.exec)?;
    store.put(Kind::Report, &Key::session(session, &report_name(kind, protocol, unit)), &report)?;
    Ok(report)
}

