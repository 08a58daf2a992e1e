//! Scores pipeline output against synthetic ground truth.

use std::collections::BTreeMap;

use hbpt_core::activity::{ActivityEvent, EventKind};
use hbpt_core::blob::PartLabel;
use hbpt_core::synthgen::{FrameTruth, GroundTruth};
use serde::{Deserialize, Serialize};

use crate::pipeline::FrameRecord;

/// Parts scored for centroid accuracy.
pub const SCORED_PARTS: [PartLabel; 6] =
    [PartLabel::Head, PartLabel::Torso, PartLabel::Leg1, PartLabel::Leg2, PartLabel::Leg3, PartLabel::Leg4];

pub const PART_TOLERANCE: f64 = 0.15;
pub const EVENT_TOLERANCE: i64 = 5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartScore {
    pub visible: usize,
    pub within: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub frame: usize,
    pub visible: bool,
    /// Frames between the scripted change and the first output frame that
    /// reflects it; `None` if it never does.
    pub lag: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatch {
    pub kind: EventKind,
    pub scripted: usize,
    pub detected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub person_frames: usize,
    /// Person frames with no tracked person.
    pub missed: usize,
    pub centroid_rms_px: f64,
    pub torso_inside_fraction: f64,
    pub parts: BTreeMap<PartLabel, PartScore>,
    pub parts_fraction: f64,
    pub arm_presence_agreement: f64,
    pub arm_transitions: Vec<Transition>,
    pub events: Vec<EventMatch>,
    pub spurious_events: Vec<ActivityEvent>,
}

impl EvalReport {
    pub fn worst_part_fraction(&self) -> f64 {
        self.parts.values().filter(|s| s.visible > 0).map(|s| s.fraction).fold(1.0, f64::min)
    }

    pub fn events_ok(&self) -> bool {
        self.spurious_events.is_empty()
            && self.events.iter().all(|m| m.detected.is_some_and(|d| (d as i64 - m.scripted as i64).abs() <= EVENT_TOLERANCE))
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        1.0
    } else {
        n as f64 / d as f64
    }
}

fn arm_present(rec: &FrameRecord) -> bool {
    rec.blob(PartLabel::ArmR).is_some()
}

fn score_parts(truth: &FrameTruth, rec: &FrameRecord, scores: &mut BTreeMap<PartLabel, PartScore>) {
    let Some(tw) = truth.torso_rect.map(|r| r.width as f64) else { return };
    for label in SCORED_PARTS {
        let Some(&(gx, gy)) = truth.parts.get(&label) else { continue };
        let s = scores.entry(label).or_default();
        s.visible += 1;
        if let Some(b) = rec.blob(label) {
            if (b.mu[0] - gx).hypot(b.mu[1] - gy) <= PART_TOLERANCE * tw {
                s.within += 1;
            }
        }
    }
}

fn match_events(truth: &GroundTruth, events: &[ActivityEvent]) -> (Vec<EventMatch>, Vec<ActivityEvent>) {
    let mut used = vec![false; events.len()];
    let mut matches = Vec::new();
    for s in &truth.events {
        let best = events
            .iter()
            .enumerate()
            .filter(|(i, e)| !used[*i] && e.kind == s.kind)
            .min_by_key(|(_, e)| (e.frame_index as i64 - s.frame as i64).abs());
        let detected = best.map(|(i, e)| {
            used[i] = true;
            e.frame_index
        });
        matches.push(EventMatch { kind: s.kind, scripted: s.frame, detected });
    }
    let spurious = events.iter().zip(&used).filter(|(_, u)| !**u).map(|(e, _)| e.clone()).collect();
    (matches, spurious)
}

pub fn evaluate(truth: &GroundTruth, records: &[FrameRecord], events: &[ActivityEvent]) -> EvalReport {
    let by_frame: BTreeMap<usize, &FrameRecord> = records.iter().map(|r| (r.frame, r)).collect();
    let (mut person_frames, mut missed, mut sq, mut n_err, mut inside) = (0, 0, 0.0, 0, 0);
    let (mut arm_frames, mut arm_agree) = (0, 0);
    let mut parts = BTreeMap::new();
    for t in truth.frames.iter().filter(|t| t.person && t.index >= truth.empty_frames) {
        person_frames += 1;
        let Some(rec) = by_frame.get(&t.index).copied() else {
            missed += 1;
            continue;
        };
        arm_frames += 1;
        if arm_present(rec) == t.arms.right {
            arm_agree += 1;
        }
        let Some(p) = &rec.person else {
            missed += 1;
            continue;
        };
        if let Some((gx, gy)) = t.centroid {
            sq += (p.centroid.0 - gx).powi(2) + (p.centroid.1 - gy).powi(2);
            n_err += 1;
        }
        if let (Some(d), Some(r)) = (p.torso, t.torso_rect) {
            if r.contains_f(d.center.0, d.center.1) {
                inside += 1;
            }
        }
        score_parts(t, rec, &mut parts);
    }
    for s in parts.values_mut() {
        s.fraction = ratio(s.within, s.visible);
    }
    let (within, visible) = parts.values().fold((0, 0), |(w, v), s| (w + s.within, v + s.visible));

    let mut arm_transitions = Vec::new();
    for pair in truth.frames.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.person && b.person && a.index >= truth.empty_frames && a.arms.right != b.arms.right {
            let start = b.index.saturating_sub(EVENT_TOLERANCE as usize);
            let lag = records
                .iter()
                .filter(|r| r.frame >= start && !r.learning)
                .find(|r| arm_present(r) == b.arms.right)
                .map(|r| r.frame as i64 - b.index as i64);
            arm_transitions.push(Transition { frame: b.index, visible: b.arms.right, lag });
        }
    }

    let (events, spurious_events) = match_events(truth, events);
    EvalReport {
        person_frames,
        missed,
        centroid_rms_px: if n_err > 0 { (sq / n_err as f64).sqrt() } else { f64::NAN },
        torso_inside_fraction: ratio(inside, person_frames),
        parts,
        parts_fraction: ratio(within, visible),
        arm_presence_agreement: ratio(arm_agree, arm_frames),
        arm_transitions,
        events,
        spurious_events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hbpt_core::activity::EventPayload;
    use hbpt_core::synthgen::{ScenarioName, ScriptedEvent};

    fn event(kind: EventKind, frame: usize) -> ActivityEvent {
        ActivityEvent {
            kind,
            frame_index: frame,
            confidence: 1.0,
            payload: EventPayload { distance_px: 0.0, distance_mm: None, depth_used: false, hist_distance: None, displacement_px: None },
        }
    }

    fn truth(events: Vec<ScriptedEvent>) -> GroundTruth {
        GroundTruth {
            scenario: ScenarioName::ApproachBox,
            seed: 0,
            width: 10,
            height: 10,
            empty_frames: 0,
            box_rect: None,
            events,
            frames: Vec::new(),
        }
    }

    #[test]
    fn events_matched_within_tolerance() {
        let t = truth(vec![ScriptedEvent { kind: EventKind::Approach, frame: 50 }, ScriptedEvent { kind: EventKind::Open, frame: 80 }]);
        let r = evaluate(&t, &[], &[event(EventKind::Approach, 54), event(EventKind::Open, 86)]);
        assert_eq!(r.events[0].detected, Some(54));
        assert_eq!(r.events[1].detected, Some(86));
        assert!(!r.events_ok());
        let r = evaluate(&t, &[], &[event(EventKind::Approach, 54), event(EventKind::Open, 85)]);
        assert!(r.events_ok());
        let r = evaluate(&t, &[], &[event(EventKind::Approach, 54), event(EventKind::Open, 85), event(EventKind::Carry, 90)]);
        assert_eq!(r.spurious_events.len(), 1);
        assert!(!r.events_ok());
    }

    #[test]
    fn no_events_scripted_and_none_fired() {
        let r = evaluate(&truth(Vec::new()), &[], &[]);
        assert!(r.events_ok());
        assert_eq!(r.person_frames, 0);
    }
}
