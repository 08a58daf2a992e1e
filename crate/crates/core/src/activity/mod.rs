//! Approach, open and carry recognition sequenced by a small state machine.

mod flow;

pub use flow::{good_features, lk_flow, FlowParams, Image};

use serde::{Deserialize, Serialize};

use crate::bodyparts::BodyPartModel;
use crate::error::{Error, Result};
use crate::geometry::{Mask, Point, Rect};
use crate::hist::{bhattacharyya, check_normalized, hist_in_rect, Hist16};
use crate::imageio::{DepthRaster, Frame};
use crate::tracker::{back_project, mean_shift};

/// Normalized 16-bin (U, V) histogram of `rect`.
pub fn color_hist16(frame: &Frame, rect: Rect) -> Result<Hist16> {
    if rect.is_empty() {
        return Err(Error::EmptyRect);
    }
    hist_in_rect(frame, rect, None).ok_or(Error::EmptyRect)
}

/// Bhattacharyya distance in [0, 1].
pub fn hist_distance(h1: &Hist16, h2: &Hist16) -> Result<f64> {
    check_normalized(h1)?;
    check_normalized(h2)?;
    Ok((1.0 - bhattacharyya(h1, h2)).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    /// Configured rectangle.
    pub rect: Rect,
    pub ref_hist: Hist16,
    pub tracked_rect: Rect,
    /// Set when the last tracking step found no box-colored weight.
    pub lost: bool,
}

impl BoxRegion {
    pub fn new(frame: &Frame, rect: Rect) -> Result<Self> {
        let r = rect.clip(frame.width, frame.height);
        let ref_hist = color_hist16(frame, r)?;
        Ok(Self { rect: r, ref_hist, tracked_rect: r, lost: false })
    }
}

/// Mean shift of the tracked rectangle over the back-projection of the
/// reference histogram.
pub fn track_box_region(region: &BoxRegion, frame: &Frame, max_iter: usize, eps: f64) -> Result<BoxRegion> {
    let weights = back_project(frame, &region.ref_hist)?;
    let ms = mean_shift(&weights, region.tracked_rect, max_iter, eps);
    let lost = ms.centroid.is_none();
    Ok(BoxRegion { tracked_rect: if lost { region.tracked_rect } else { ms.window }, lost, ..region.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityParams {
    pub d_xy: f64,
    pub approach_frames: usize,
    pub approach_depth_tol_mm: f64,
    pub depth_window: i32,
    pub theta_open: f64,
    pub open_frames: usize,
    pub carry_frames: usize,
    pub carry_min_disp: f64,
    pub carry_depth_tol_mm: f64,
    pub track_points: usize,
    pub ms_max_iter: usize,
    pub ms_eps: f64,
    pub flow: FlowParams,
}

impl Default for ActivityParams {
    fn default() -> Self {
        Self {
            d_xy: 30.0,
            approach_frames: 3,
            approach_depth_tol_mm: 300.0,
            depth_window: 5,
            theta_open: 0.4,
            open_frames: 5,
            carry_frames: 5,
            carry_min_disp: 1.0,
            carry_depth_tol_mm: 200.0,
            track_points: 30,
            ms_max_iter: 20,
            ms_eps: 1.0,
            flow: FlowParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Approach,
    Open,
    Carry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPayload {
    pub distance_px: f64,
    pub distance_mm: Option<f64>,
    pub depth_used: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hist_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub displacement_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub kind: EventKind,
    pub frame_index: usize,
    pub confidence: f64,
    pub payload: EventPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Phase {
    #[default]
    Idle,
    Approached,
    Opened,
    Carrying,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivityState {
    pub phase: Phase,
    pub approach_count: usize,
    pub open_count: usize,
    pub carry_count: usize,
    pub approach_fired: bool,
    pub open_fired: bool,
    pub carry_fired: bool,
    last_hand_z: Option<f64>,
    last_object_z: Option<f64>,
}

/// Depth raster paired with the person silhouette used as sampling support
/// for body points.
#[derive(Debug, Clone, Copy)]
pub struct DepthInput<'a> {
    pub depth: &'a DepthRaster,
    pub silhouette: &'a Mask,
}

fn nearest_hand(model: &BodyPartModel, dist: impl Fn(Point) -> f64) -> Option<(Point, f64)> {
    model
        .hands
        .iter()
        .map(|h| (h.point, dist(h.point)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
}

fn hand_z(d: &DepthInput, p: Point, window: i32) -> Option<f64> {
    d.depth.median_in_window(p.x, p.y, window, Some(d.silhouette)).map(f64::from)
}

pub fn detect_approach(
    model: &BodyPartModel,
    region: &BoxRegion,
    depth: Option<DepthInput>,
    state: &mut ActivityState,
    params: &ActivityParams,
) -> Option<ActivityEvent> {
    if state.approach_fired {
        return None;
    }
    let rect = region.tracked_rect;
    let measured = nearest_hand(model, |p| rect.distance_to(p.x as f64, p.y as f64)).and_then(|(hand, d)| {
        if d > params.d_xy || model.torso().is_none() {
            return None;
        }
        match depth {
            None => Some((d, None)),
            Some(di) => {
                let (cx, cy) = rect.center();
                let zb = di.depth.median_in_window(cx.round() as i32, cy.round() as i32, params.depth_window, None)? as f64;
                let zh = hand_z(&di, hand, params.depth_window)?;
                let dz = (zh - zb).abs();
                (dz <= params.approach_depth_tol_mm).then_some((d, Some(dz)))
            }
        }
    });
    let Some((d, dz)) = measured else {
        state.approach_count = 0;
        return None;
    };
    state.approach_count += 1;
    if state.approach_count < params.approach_frames.max(1) {
        return None;
    }
    state.approach_fired = true;
    state.phase = state.phase.max(Phase::Approached);
    Some(ActivityEvent {
        kind: EventKind::Approach,
        frame_index: model.frame_index,
        confidence: (1.0 - d / (params.d_xy + 1.0)).clamp(0.0, 1.0),
        payload: EventPayload { distance_px: d, distance_mm: dz, depth_used: depth.is_some(), hist_distance: None, displacement_px: None },
    })
}

pub fn detect_open(
    region: &BoxRegion,
    frame: &Frame,
    state: &mut ActivityState,
    params: &ActivityParams,
) -> Result<Option<ActivityEvent>> {
    if state.phase < Phase::Approached || state.open_fired {
        return Ok(None);
    }
    let h = color_hist16(frame, region.tracked_rect)?;
    let d = hist_distance(&h, &region.ref_hist)?;
    if d <= params.theta_open {
        state.open_count = 0;
        return Ok(None);
    }
    state.open_count += 1;
    if state.open_count < params.open_frames.max(1) {
        return Ok(None);
    }
    state.open_fired = true;
    if state.phase == Phase::Approached {
        state.phase = Phase::Opened;
    }
    Ok(Some(ActivityEvent {
        kind: EventKind::Open,
        frame_index: frame.index,
        confidence: d,
        payload: EventPayload { distance_px: 0.0, distance_mm: None, depth_used: false, hist_distance: Some(d), displacement_px: None },
    }))
}

/// Point-tracked object: features from a rectangle followed with optical flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub points: Vec<(f64, f64)>,
    pub alive: Vec<bool>,
    pub initial_count: usize,
    /// Mean motion of the points alive across the last update.
    pub last_displacement: (f64, f64),
}

impl ObjectTrack {
    pub fn init(img: &Image, rect: Rect, params: &ActivityParams) -> Option<Self> {
        let inner = Rect::new(rect.x + 2, rect.y + 2, rect.width - 4, rect.height - 4);
        let pts = good_features(img, inner, params.track_points, 5, params.flow.min_eig, 4.0);
        if pts.is_empty() {
            return None;
        }
        Some(Self { alive: vec![true; pts.len()], initial_count: pts.len(), points: pts, last_displacement: (0.0, 0.0) })
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        let n = self.alive_count();
        if n == 0 {
            return None;
        }
        let (sx, sy) = self.points.iter().zip(&self.alive).filter(|(_, &a)| a).fold((0.0, 0.0), |s, (p, _)| (s.0 + p.0, s.1 + p.1));
        Some((sx / n as f64, sy / n as f64))
    }

    pub fn needs_reinit(&self) -> bool {
        2 * self.alive_count() < self.initial_count || self.alive_count() == 0
    }

    pub fn update(&mut self, prev: &Image, next: &Image, params: &FlowParams) {
        let idx: Vec<usize> = (0..self.points.len()).filter(|&i| self.alive[i]).collect();
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| self.points[i]).collect();
        let out = lk_flow(prev, next, &pts, params);
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (&i, (q, ok)) in idx.iter().zip(out) {
            if ok {
                sx += q.0 - self.points[i].0;
                sy += q.1 - self.points[i].1;
                n += 1;
                self.points[i] = q;
            } else {
                self.alive[i] = false;
            }
        }
        self.last_displacement = if n > 0 { (sx / n as f64, sy / n as f64) } else { (0.0, 0.0) };
    }
}

pub fn detect_carry(
    model: &BodyPartModel,
    track: &ObjectTrack,
    depth: Option<DepthInput>,
    state: &mut ActivityState,
    params: &ActivityParams,
) -> Option<ActivityEvent> {
    let centroid = track.centroid();
    // depth history is kept every frame so deltas are per frame
    let (hand, dist) = match centroid {
        Some((ox, oy)) => nearest_hand(model, |p| (p.x as f64 - ox).hypot(p.y as f64 - oy)).unzip(),
        None => (None, None),
    };
    let mut dz_gap = None;
    if let Some(di) = depth {
        let zo = centroid.and_then(|(ox, oy)| di.depth.median_in_window(ox.round() as i32, oy.round() as i32, params.depth_window, None)).map(f64::from);
        let zh = hand.and_then(|h| hand_z(&di, h, params.depth_window));
        if let (Some(zo), Some(zh)) = (zo, zh) {
            let dzo = state.last_object_z.map_or(0.0, |z| zo - z);
            let dzh = state.last_hand_z.map_or(0.0, |z| zh - z);
            dz_gap = Some((dzo - dzh).abs());
        }
        state.last_object_z = zo;
        state.last_hand_z = zh;
    }
    if state.phase < Phase::Approached || state.carry_fired {
        return None;
    }
    let disp = track.last_displacement.0.hypot(track.last_displacement.1);
    let depth_ok = match depth {
        None => true,
        Some(_) => dz_gap.is_some_and(|g| g <= params.carry_depth_tol_mm),
    };
    let qualifies = disp > params.carry_min_disp && dist.is_some_and(|d| d <= params.d_xy) && depth_ok;
    if !qualifies {
        state.carry_count = 0;
        return None;
    }
    state.carry_count += 1;
    if state.carry_count < params.carry_frames.max(1) {
        return None;
    }
    state.carry_fired = true;
    state.phase = Phase::Carrying;
    Some(ActivityEvent {
        kind: EventKind::Carry,
        frame_index: model.frame_index,
        confidence: track.alive_count() as f64 / track.initial_count.max(1) as f64,
        payload: EventPayload {
            distance_px: dist.unwrap_or(0.0),
            distance_mm: dz_gap,
            depth_used: depth.is_some(),
            hist_distance: None,
            displacement_px: Some(disp),
        },
    })
}

/// Runs the three recognizers frame by frame.
#[derive(Debug, Clone)]
pub struct ActivityRecognizer {
    pub params: ActivityParams,
    pub region: Option<BoxRegion>,
    pub state: ActivityState,
    pub track: Option<ObjectTrack>,
    prev_luma: Option<Image>,
}

impl ActivityRecognizer {
    pub fn new(params: ActivityParams) -> Self {
        Self { params, region: None, state: ActivityState::default(), track: None, prev_luma: None }
    }

    /// Builds the reference histogram from `frame`.
    pub fn set_box(&mut self, frame: &Frame, rect: Rect) -> Result<()> {
        self.region = Some(BoxRegion::new(frame, rect)?);
        Ok(())
    }

    pub fn step(
        &mut self,
        frame: &Frame,
        model: Option<&BodyPartModel>,
        silhouette: Option<&Mask>,
        depth: Option<&DepthRaster>,
    ) -> Result<Vec<ActivityEvent>> {
        let Some(region) = &self.region else { return Ok(Vec::new()) };
        let region = track_box_region(region, frame, self.params.ms_max_iter, self.params.ms_eps)?;
        let depth_in = match (depth, silhouette) {
            (Some(depth), Some(silhouette)) => Some(DepthInput { depth, silhouette }),
            _ => None,
        };
        let mut events = Vec::new();
        if let Some(m) = model {
            events.extend(detect_approach(m, &region, depth_in, &mut self.state, &self.params));
        } else {
            self.state.approach_count = 0;
        }
        events.extend(detect_open(&region, frame, &mut self.state, &self.params)?);

        if self.state.phase >= Phase::Approached {
            let luma = Image::from_frame(frame);
            match (&mut self.track, &self.prev_luma) {
                (Some(t), Some(prev)) if !t.needs_reinit() => t.update(prev, &luma, &self.params.flow),
                _ => self.track = ObjectTrack::init(&luma, region.tracked_rect, &self.params),
            }
            match (&self.track, model) {
                (Some(t), Some(m)) => events.extend(detect_carry(m, t, depth_in, &mut self.state, &self.params)),
                _ => self.state.carry_count = 0,
            }
            self.prev_luma = Some(luma);
        }
        self.region = Some(region);
        Ok(events)
    }
}
