use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ActivityId, GazePoint, MovementType};
use crate::timeline::TaggedSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Fixation,
    Saccade,
}

impl EventKind {
    fn from_movement(m: MovementType) -> Option<Self> {
        match m {
            MovementType::Fixation => Some(EventKind::Fixation),
            MovementType::Saccade => Some(EventKind::Saccade),
            _ => None,
        }
    }
}

/// One fixation or saccade assembled from its tracker frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeEvent {
    pub kind: EventKind,
    pub event_index: u64,
    pub t_begin: i64,
    pub t_end: i64,
    /// Tracker-reported event duration in ms.
    pub duration: u64,
    pub start_point: GazePoint,
    pub end_point: GazePoint,
    /// Mean of the frame gaze points.
    pub centroid: GazePoint,
    pub sample_count: usize,
    /// Activity of the first frame.
    pub activity: Option<ActivityId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventReport {
    /// Events whose frames fall in more than one activity.
    pub spanning: Vec<(EventKind, u64)>,
    /// Events dropped because the tracker reported zero duration.
    pub zero_duration: Vec<(EventKind, u64)>,
}

struct Building {
    event: GazeEvent,
    sum_x: f64,
    sum_y: f64,
    spans: bool,
}

/// Group fixation and saccade frames by (type, index) into events, in order
/// of first appearance. Unclassified and eyes-not-found frames are ignored.
pub fn collect_events(tagged: &[TaggedSample]) -> (Vec<GazeEvent>, EventReport) {
    let mut slots: HashMap<(EventKind, u64), usize> = HashMap::new();
    let mut building: Vec<Building> = Vec::new();
    for ts in tagged {
        let s = &ts.sample;
        let (Some(kind), Some(p)) = (EventKind::from_movement(s.movement_type), s.gaze) else {
            continue;
        };
        match slots.get(&(kind, s.event_index)) {
            Some(&i) => {
                let b = &mut building[i];
                b.event.t_end = b.event.t_end.max(ts.t_abs);
                b.event.end_point = p;
                b.event.sample_count += 1;
                b.sum_x += p.x;
                b.sum_y += p.y;
                if b.event.activity != ts.activity {
                    b.spans = true;
                }
            }
            None => {
                slots.insert((kind, s.event_index), building.len());
                building.push(Building {
                    event: GazeEvent {
                        kind,
                        event_index: s.event_index,
                        t_begin: ts.t_abs,
                        t_end: ts.t_abs,
                        duration: s.event_duration,
                        start_point: p,
                        end_point: p,
                        centroid: p,
                        sample_count: 1,
                        activity: ts.activity.clone(),
                    },
                    sum_x: p.x,
                    sum_y: p.y,
                    spans: false,
                });
            }
        }
    }
    let mut report = EventReport::default();
    let mut events = Vec::with_capacity(building.len());
    for b in building {
        let mut e = b.event;
        let key = (e.kind, e.event_index);
        if e.duration == 0 {
            report.zero_duration.push(key);
            continue;
        }
        if b.spans {
            report.spanning.push(key);
        }
        let n = e.sample_count as f64;
        e.centroid = GazePoint::new(b.sum_x / n, b.sum_y / n);
        events.push(e);
    }
    (events, report)
}

/// Saccade velocity from net displacement over the event duration, px/ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaccadeVelocity {
    pub v: f64,
    pub v_x: f64,
    pub v_y: f64,
}

pub fn saccade_velocity(event: &GazeEvent) -> Result<SaccadeVelocity> {
    if event.kind != EventKind::Saccade {
        return Err(Error::Domain("velocity requested for a non-saccade event".into()));
    }
    if event.duration == 0 {
        return Err(Error::Domain("saccade with zero duration".into()));
    }
    let d = event.duration as f64;
    let v_x = (event.end_point.x - event.start_point.x) / d;
    let v_y = (event.end_point.y - event.start_point.y) / d;
    Ok(SaccadeVelocity {
        v: v_x.hypot(v_y),
        v_x,
        v_y,
    })
}
