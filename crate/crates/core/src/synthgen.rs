//! Deterministic synthetic scenes: a rectangle-and-disc figure over a static
//! textured wall, optionally with a box to approach, open or carry.
//!
//! All geometry is laid out for 320x240 and scaled for other sizes.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activity::{ActivityParams, EventKind};
use crate::blob::PartLabel;
use crate::bodyparts::{build_part_model, detect_starfish, partition_regions, DEFAULT_MIN_PART_AREA};
use crate::error::{Error, Result};
use crate::geometry::{Mask, Rect};
use crate::imageio::{convert_yuv_to_rgb, write_depth_raster, write_ppm, DepthRaster, Frame};
use crate::tracker::{core_run, torso_disc};

const BASE_W: f64 = 320.0;
const BASE_H: f64 = 240.0;

const WALL_DEPTH_MM: u16 = 4000;
const WALL_UV: (u8, u8) = (150, 100);
const HEAD_YUV: [u8; 3] = [170, 105, 150];
const SHIRT_YUV: [u8; 3] = [110, 90, 170];
const PANTS_YUV: [u8; 3] = [70, 110, 150];
const BOX_UV: (u8, u8) = (100, 56);
const BOX_Y: (u8, u8) = (110, 170);
const OPEN_BOX_UV: (u8, u8) = (150, 200);
const OPEN_BOX_Y: (u8, u8) = (100, 140);
const BOX_CELL: f64 = 6.0;

const TRACK_LEFT: f64 = 60.0;
const TRACK_RIGHT: f64 = 260.0;
const NULL_RIGHT: f64 = 120.0;
const TORSO_Y: f64 = 95.0;
const STAND_X: f64 = 160.0;
const BOX_RECT: (f64, f64, f64, f64) = (262.0, 58.0, 36.0, 30.0);
const APPROACH_STOP: f64 = 168.0;
const CARRY_STOP: f64 = 180.0;

const TORSO_HALF: (f64, f64) = (18.0, 28.0);
const NECK_HALF_W: f64 = 5.0;
const NECK_H: f64 = 4.0;
const HEAD_R: f64 = 12.0;
const HEAD_DY: f64 = 42.0;
const SHOULDER: (f64, f64) = (25.0, -23.0);
const ARM_LEN: f64 = 58.0;
const ARM_HALF_W: f64 = 4.5;
const HIP_DX: f64 = 9.0;
const LEG_LEN: f64 = 60.0;
const LEG_HALF_W: f64 = 7.0;
const STARFISH_FOOT_DX: f64 = 7.0;
const STARFISH_RAISE: f64 = 20.0 * std::f64::consts::PI / 180.0;

const PAUSE_FRAMES: usize = 3;
const RAISE_FRAMES: usize = 15;
const OPEN_DELAY: usize = 15;
const LIFT_DELAY: usize = 10;
const OCCLUSION: (usize, usize) = (40, 80);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Background,
    Walker,
    Starfish,
    OccludedArm,
    ApproachBox,
    OpenBox,
    CarryBox,
    NullWalk,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 8] = [
        Self::Background,
        Self::Walker,
        Self::Starfish,
        Self::OccludedArm,
        Self::ApproachBox,
        Self::OpenBox,
        Self::CarryBox,
        Self::NullWalk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Background => "background",
            Self::Walker => "walker",
            Self::Starfish => "starfish",
            Self::OccludedArm => "occluded_arm",
            Self::ApproachBox => "approach_box",
            Self::OpenBox => "open_box",
            Self::CarryBox => "carry_box",
            Self::NullWalk => "null_walk",
        }
    }

    pub fn default_frames(self) -> usize {
        match self {
            Self::Background => 30,
            Self::Walker => 300,
            Self::Starfish => 60,
            Self::OccludedArm => 150,
            Self::ApproachBox => 120,
            Self::OpenBox => 150,
            Self::CarryBox => 160,
            Self::NullWalk => 100,
        }
    }

    pub fn has_box(self) -> bool {
        matches!(self, Self::ApproachBox | Self::OpenBox | Self::CarryBox | Self::NullWalk)
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub width: usize,
    pub height: usize,
    /// Total frame count; `None` uses the scenario default.
    pub frames: Option<usize>,
    /// Empty-scene frames before the person appears.
    pub empty_frames: usize,
    /// Walking speed in pixels per frame (at 320x240).
    pub speed: f64,
    /// Standard deviation of the per-channel RGB noise.
    pub noise_sigma: f64,
    pub person_depth_mm: u16,
    pub box_depth_mm: u16,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            frames: None,
            empty_frames: 30,
            speed: 3.0,
            noise_sigma: 2.0,
            person_depth_mm: 2000,
            box_depth_mm: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub params: ScenarioParams,
    pub seed: u64,
}

impl Scenario {
    pub fn new(name: ScenarioName, seed: u64) -> Self {
        Self { name, params: ScenarioParams::default(), seed }
    }

    pub fn with_frames(mut self, frames: usize) -> Self {
        self.params.frames = Some(frames);
        self
    }

    pub fn frame_count(&self) -> usize {
        self.params.frames.unwrap_or_else(|| self.name.default_frames())
    }

    fn validate(&self) -> Result<f64> {
        let p = &self.params;
        let scale = (p.width as f64 / BASE_W).min(p.height as f64 / BASE_H);
        if scale < 0.5 {
            return Err(Error::InvalidParams(format!("frame {}x{} is too small", p.width, p.height)));
        }
        if self.frame_count() == 0 {
            return Err(Error::InvalidParams("frame count must be positive".into()));
        }
        if !(p.speed > 0.0 && p.speed <= 20.0) {
            return Err(Error::InvalidParams(format!("speed {} out of (0, 20]", p.speed)));
        }
        if !(p.noise_sigma >= 0.0 && p.noise_sigma <= 50.0) {
            return Err(Error::InvalidParams(format!("noise sigma {} out of [0, 50]", p.noise_sigma)));
        }
        for d in [p.person_depth_mm, p.box_depth_mm] {
            if !(500..=10_000).contains(&d) {
                return Err(Error::InvalidParams(format!("depth {d} mm out of 500..=10000")));
            }
        }
        Ok(scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    pub kind: EventKind,
    pub frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArmVisibility {
    pub left: bool,
    pub right: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandTip {
    pub label: PartLabel,
    pub point: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub index: usize,
    pub person: bool,
    /// Scripted torso center.
    pub torso_center: Option<(f64, f64)>,
    /// Pixel bounds of the rendered torso rectangle.
    pub torso_rect: Option<Rect>,
    /// Centroid of the noise-free silhouette.
    pub centroid: Option<(f64, f64)>,
    pub bbox: Option<Rect>,
    pub area: usize,
    /// Width of the torso disc fitted to the noise-free silhouette.
    pub torso_width: Option<f64>,
    /// Part centroids from partitioning the noise-free silhouette.
    pub parts: BTreeMap<PartLabel, (f64, f64)>,
    pub arms: ArmVisibility,
    pub hand_tips: Vec<HandTip>,
    pub box_rect: Option<Rect>,
    pub box_open: bool,
    pub starfish: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: ScenarioName,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub empty_frames: usize,
    /// Box rectangle in the first frame.
    pub box_rect: Option<Rect>,
    pub events: Vec<ScriptedEvent>,
    pub frames: Vec<FrameTruth>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<Frame>,
    pub depths: Vec<DepthRaster>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Material {
    Head,
    Torso,
    Shirt,
    Pants,
}

/// Figure pose in 320x240 layout units. Arm angles are image-space
/// directions from the shoulder (0 points right, pi/2 points down).
#[derive(Debug, Clone, Copy)]
struct Pose {
    tx: f64,
    ty: f64,
    arm_l: f64,
    arm_r: f64,
    foot_dx: f64,
    show_l: bool,
    show_r: bool,
}

impl Pose {
    fn standing(tx: f64) -> Self {
        Self {
            tx,
            ty: TORSO_Y,
            arm_l: FRAC_PI_2,
            arm_r: FRAC_PI_2,
            foot_dx: 0.0,
            show_l: true,
            show_r: true,
        }
    }

    fn starfish(tx: f64) -> Self {
        Self {
            arm_l: std::f64::consts::PI + STARFISH_RAISE,
            arm_r: -STARFISH_RAISE,
            foot_dx: STARFISH_FOOT_DX,
            ..Self::standing(tx)
        }
    }

    fn shoulder(&self, side: f64) -> (f64, f64) {
        (self.tx + side * SHOULDER.0, self.ty + SHOULDER.1)
    }

    fn tip(&self, side: f64) -> (f64, f64) {
        let a = if side > 0.0 { self.arm_r } else { self.arm_l };
        let s = self.shoulder(side);
        (s.0 + ARM_LEN * a.cos(), s.1 + ARM_LEN * a.sin())
    }

    fn material(&self, x: f64, y: f64) -> Option<Material> {
        let (dx, dy) = (x - self.tx, y - self.ty);
        if dx.abs() > SHOULDER.0 + ARM_LEN + ARM_HALF_W + 1.0 || dy < -(SHOULDER.0 + ARM_LEN + 1.0) || dy > 1.5 * LEG_LEN + TORSO_HALF.1 {
            return None;
        }
        if dx.abs() < TORSO_HALF.0 && dy >= -TORSO_HALF.1 && dy < TORSO_HALF.1 {
            return Some(Material::Torso);
        }
        if dx.abs() <= NECK_HALF_W && dy >= -TORSO_HALF.1 - NECK_H && dy < -TORSO_HALF.1 {
            return Some(Material::Head);
        }
        if dx * dx + (dy + HEAD_DY).powi(2) <= HEAD_R * HEAD_R {
            return Some(Material::Head);
        }
        for (side, show, angle) in [(-1.0, self.show_l, self.arm_l), (1.0, self.show_r, self.arm_r)] {
            if !show {
                continue;
            }
            let sx = side * dx;
            let pad = sx >= TORSO_HALF.0 - 0.5
                && sx <= SHOULDER.0 + ARM_HALF_W
                && (dy - SHOULDER.1).abs() <= ARM_HALF_W;
            if pad || in_limb((x, y), self.shoulder(side), angle, ARM_LEN, ARM_HALF_W) {
                return Some(Material::Shirt);
            }
        }
        for side in [-1.0, 1.0] {
            let hip = (self.tx + side * HIP_DX, self.ty + TORSO_HALF.1);
            let foot = (hip.0 + side * self.foot_dx, hip.1 + LEG_LEN);
            let angle = (foot.1 - hip.1).atan2(foot.0 - hip.0);
            let len = (foot.0 - hip.0).hypot(foot.1 - hip.1);
            if in_limb((x, y), hip, angle, len, LEG_HALF_W) {
                return Some(Material::Pants);
            }
        }
        None
    }
}

/// Point inside the rectangle of half-width `half_w` along the segment from
/// `start` in direction `angle` of length `len`.
fn in_limb(p: (f64, f64), start: (f64, f64), angle: f64, len: f64, half_w: f64) -> bool {
    let (c, s) = (angle.cos(), angle.sin());
    let (vx, vy) = (p.0 - start.0, p.1 - start.1);
    let along = vx * c + vy * s;
    let across = (vy * c - vx * s).abs();
    (0.0..=len).contains(&along) && across <= half_w
}

/// Triangle wave bouncing between `lo` and `hi` after travelling `d`.
fn ping_pong(lo: f64, hi: f64, d: f64) -> f64 {
    let span = hi - lo;
    let m = d.rem_euclid(2.0 * span);
    lo + if m <= span { m } else { 2.0 * span - m }
}

fn rect_distance(p: (f64, f64), r: (f64, f64, f64, f64)) -> f64 {
    let dx = (r.0 - p.0).max(p.0 - (r.0 + r.2 - 1.0)).max(0.0);
    let dy = (r.1 - p.1).max(p.1 - (r.1 + r.3 - 1.0)).max(0.0);
    dx.hypot(dy)
}

#[derive(Debug, Clone, Copy)]
struct SceneState {
    pose: Option<Pose>,
    box_rect: Option<(f64, f64, f64, f64)>,
    box_open: bool,
}

/// Script timing for the box scenarios, in frames after the person appears.
#[derive(Debug, Clone, Copy)]
struct Script {
    stop_x: f64,
    raise_start: usize,
    raise_end: usize,
}

impl Script {
    fn new(stop_x: f64, speed: f64) -> Self {
        let walk_steps = ((stop_x - TRACK_LEFT) / speed).ceil() as usize;
        let raise_start = walk_steps + PAUSE_FRAMES;
        Self { stop_x, raise_start, raise_end: raise_start + RAISE_FRAMES }
    }

    fn arm_angle(&self, k: usize) -> f64 {
        if k < self.raise_start {
            FRAC_PI_2
        } else if k >= self.raise_end {
            0.0
        } else {
            FRAC_PI_2 * (1.0 - (k - self.raise_start) as f64 / RAISE_FRAMES as f64)
        }
    }

    fn reach_pose(&self, k: usize, speed: f64) -> Pose {
        let tx = (TRACK_LEFT + speed * k as f64).min(self.stop_x);
        Pose { arm_r: self.arm_angle(k), ..Pose::standing(tx) }
    }
}

fn scene_at(scenario: &Scenario, f: usize) -> SceneState {
    let p = &scenario.params;
    let initial_box = scenario.name.has_box().then_some(BOX_RECT);
    let mut state = SceneState { pose: None, box_rect: initial_box, box_open: false };
    if f < p.empty_frames || scenario.name == ScenarioName::Background {
        return state;
    }
    let k = f - p.empty_frames;
    let d = p.speed * k as f64;
    state.pose = Some(match scenario.name {
        ScenarioName::Background => unreachable!(),
        ScenarioName::Walker => Pose::standing(ping_pong(TRACK_LEFT, TRACK_RIGHT, d)),
        ScenarioName::Starfish => Pose::starfish(STAND_X),
        ScenarioName::OccludedArm => Pose {
            show_r: !(OCCLUSION.0..OCCLUSION.1).contains(&k),
            ..Pose::standing(ping_pong(TRACK_LEFT, TRACK_RIGHT, d))
        },
        ScenarioName::NullWalk => Pose::standing(ping_pong(TRACK_LEFT, NULL_RIGHT, d)),
        ScenarioName::ApproachBox => Script::new(APPROACH_STOP, p.speed).reach_pose(k, p.speed),
        ScenarioName::OpenBox => {
            let script = Script::new(APPROACH_STOP, p.speed);
            state.box_open = k >= script.raise_end + OPEN_DELAY;
            script.reach_pose(k, p.speed)
        }
        ScenarioName::CarryBox => {
            let script = Script::new(CARRY_STOP, p.speed);
            let lift = script.raise_end + LIFT_DELAY;
            if k < lift {
                script.reach_pose(k, p.speed)
            } else {
                let moved = (p.speed * (k - lift + 1) as f64).min(script.stop_x - TRACK_LEFT);
                let (bx, by, bw, bh) = BOX_RECT;
                state.box_rect = Some((bx - moved, by, bw, bh));
                Pose { arm_r: 0.0, ..Pose::standing(script.stop_x - moved) }
            }
        }
    });
    state
}

fn scripted_events(scenario: &Scenario, scale: f64) -> Vec<ScriptedEvent> {
    let p = &scenario.params;
    let (stop_x, extra) = match scenario.name {
        ScenarioName::ApproachBox => (APPROACH_STOP, None),
        ScenarioName::OpenBox => (APPROACH_STOP, Some((EventKind::Open, OPEN_DELAY))),
        ScenarioName::CarryBox => (CARRY_STOP, Some((EventKind::Carry, LIFT_DELAY))),
        _ => return Vec::new(),
    };
    let activity = ActivityParams::default();
    if (p.person_depth_mm as f64 - p.box_depth_mm as f64).abs() > activity.approach_depth_tol_mm {
        return Vec::new();
    }
    let script = Script::new(stop_x, p.speed);
    let total = scenario.frame_count();
    let mut events = Vec::new();
    let contact = (p.empty_frames..total).find(|&f| {
        let pose = script.reach_pose(f - p.empty_frames, p.speed);
        rect_distance(pose.tip(1.0), BOX_RECT) * scale <= activity.d_xy
    });
    if let Some(c) = contact {
        events.push(ScriptedEvent { kind: EventKind::Approach, frame: c });
        if let Some((kind, delay)) = extra {
            let f = p.empty_frames + script.raise_end + delay;
            if f < total {
                events.push(ScriptedEvent { kind, frame: f });
            }
        }
    }
    events
}

fn wall_luma(x: f64, y: f64) -> f64 {
    130.0 + 25.0 * (0.19 * x + 0.5).sin() + 15.0 * (0.13 * y - 0.07 * x).cos()
}

fn checker(x: f64, y: f64, rect: (f64, f64, f64, f64), levels: (u8, u8)) -> u8 {
    let cx = ((x - rect.0) / BOX_CELL).floor() as i64;
    let cy = ((y - rect.1) / BOX_CELL).floor() as i64;
    if (cx + cy).rem_euclid(2) == 0 {
        levels.0
    } else {
        levels.1
    }
}

fn in_rect(x: f64, y: f64, r: (f64, f64, f64, f64)) -> bool {
    x >= r.0 - 0.5 && x < r.0 + r.2 - 0.5 && y >= r.1 - 0.5 && y < r.1 + r.3 - 0.5
}

struct Rendered {
    frame: Frame,
    depth: DepthRaster,
    silhouette: Mask,
    torso: Mask,
}

fn wall_plane(scenario: &Scenario, scale: f64) -> Vec<u8> {
    let (w, h) = (scenario.params.width, scenario.params.height);
    (0..w * h)
        .map(|i| wall_luma((i % w) as f64 / scale, (i / w) as f64 / scale).round() as u8)
        .collect()
}

fn render(scenario: &Scenario, scale: f64, wall: &[u8], index: usize, state: &SceneState) -> Result<Rendered> {
    let p = &scenario.params;
    let (w, h) = (p.width, p.height);
    let mut rgb = Vec::with_capacity(w * h);
    let mut z = Vec::with_capacity(w * h);
    let mut silhouette = Mask::new(w, h);
    let mut torso = Mask::new(w, h);
    for py in 0..h {
        for px in 0..w {
            let (x, y) = (px as f64 / scale, py as f64 / scale);
            let mut yuv = [wall[py * w + px], WALL_UV.0, WALL_UV.1];
            let mut depth = WALL_DEPTH_MM;
            if let Some(m) = state.pose.and_then(|pose| pose.material(x, y)) {
                yuv = match m {
                    Material::Head => HEAD_YUV,
                    Material::Torso | Material::Shirt => SHIRT_YUV,
                    Material::Pants => PANTS_YUV,
                };
                depth = p.person_depth_mm;
                silhouette.set(px, py, true);
                if m == Material::Torso {
                    torso.set(px, py, true);
                }
            }
            if let Some(r) = state.box_rect.filter(|r| in_rect(x, y, *r)) {
                let (uv, levels) = if state.box_open { (OPEN_BOX_UV, OPEN_BOX_Y) } else { (BOX_UV, BOX_Y) };
                yuv = [checker(x, y, r, levels), uv.0, uv.1];
                depth = p.box_depth_mm;
            }
            rgb.push(convert_yuv_to_rgb(yuv[0], yuv[1], yuv[2]));
            z.push(depth);
        }
    }
    if p.noise_sigma > 0.0 {
        let seed = scenario.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, p.noise_sigma).map_err(|e| Error::InvalidParams(e.to_string()))?;
        for px in &mut rgb {
            for c in px.iter_mut() {
                *c = (*c as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(Rendered {
        frame: Frame::from_rgb(index, w, h, rgb)?,
        depth: DepthRaster { width: w, height: h, z },
        silhouette,
        torso,
    })
}

fn scaled_rect(r: (f64, f64, f64, f64), scale: f64) -> Rect {
    let x0 = (r.0 * scale).round() as i32;
    let y0 = (r.1 * scale).round() as i32;
    let x1 = ((r.0 + r.2) * scale).round() as i32;
    let y1 = ((r.1 + r.3) * scale).round() as i32;
    Rect::new(x0, y0, x1 - x0, y1 - y0)
}

fn frame_truth(index: usize, scale: f64, state: &SceneState, r: &Rendered) -> Result<FrameTruth> {
    let mut truth = FrameTruth {
        index,
        person: false,
        torso_center: None,
        torso_rect: None,
        centroid: None,
        bbox: None,
        area: 0,
        torso_width: None,
        parts: BTreeMap::new(),
        arms: ArmVisibility::default(),
        hand_tips: Vec::new(),
        box_rect: state.box_rect.map(|b| scaled_rect(b, scale)),
        box_open: state.box_open,
        starfish: false,
    };
    let Some(pose) = state.pose else { return Ok(truth) };
    let Some(bbox) = r.silhouette.bbox() else { return Ok(truth) };
    let pts: Vec<_> = r.silhouette.points().collect();
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x as f64).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y as f64).sum::<f64>() / n;
    truth.person = true;
    truth.torso_center = Some((pose.tx * scale, pose.ty * scale));
    truth.torso_rect = r.torso.bbox();
    truth.centroid = Some((cx, cy));
    truth.bbox = Some(bbox);
    truth.area = pts.len();
    truth.arms = ArmVisibility { left: pose.show_l, right: pose.show_r };
    for (label, side, show) in [(PartLabel::ArmL, -1.0, pose.show_l), (PartLabel::ArmR, 1.0, pose.show_r)] {
        if show {
            let t = pose.tip(side);
            truth.hand_tips.push(HandTip { label, point: (t.0 * scale, t.1 * scale) });
        }
    }
    if let Some((core_x, width)) = core_run(&r.silhouette, (cx, cy)) {
        if let Ok(disc) = torso_disc(core_x, cy, width, bbox) {
            truth.torso_width = Some(2.0 * disc.radius);
            let partition = partition_regions(&r.silhouette, &disc, bbox)?;
            let model = build_part_model(&partition, &r.frame, None, DEFAULT_MIN_PART_AREA)?;
            truth.parts = model.blobs.iter().map(|(l, b)| (*l, (b.mu[0], b.mu[1]))).collect();
            truth.starfish = detect_starfish(&model, &disc);
        }
    }
    Ok(truth)
}

/// Frame `index` of the scenario together with its noise-free silhouette.
pub fn generate_frame(scenario: &Scenario, index: usize) -> Result<(Frame, DepthRaster, Mask)> {
    let scale = scenario.validate()?;
    let state = scene_at(scenario, index);
    let r = render(scenario, scale, &wall_plane(scenario, scale), index, &state)?;
    Ok((r.frame, r.depth, r.silhouette))
}

/// Renders every frame of the scenario. Each frame depends only on the
/// scenario and its index.
pub fn generate_scenario(scenario: &Scenario) -> Result<SyntheticSequence> {
    let scale = scenario.validate()?;
    let n = scenario.frame_count();
    let mut frames = Vec::with_capacity(n);
    let mut depths = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    let wall = wall_plane(scenario, scale);
    for index in 0..n {
        let state = scene_at(scenario, index);
        let r = render(scenario, scale, &wall, index, &state)?;
        truths.push(frame_truth(index, scale, &state, &r)?);
        frames.push(r.frame);
        depths.push(r.depth);
    }
    let p = &scenario.params;
    let truth = GroundTruth {
        scenario: scenario.name,
        seed: scenario.seed,
        width: p.width,
        height: p.height,
        empty_frames: p.empty_frames,
        box_rect: scenario.name.has_box().then(|| scaled_rect(BOX_RECT, scale)),
        events: scripted_events(scenario, scale),
        frames: truths,
    };
    Ok(SyntheticSequence { frames, depths, truth })
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.ppm")
}

pub fn depth_file_name(index: usize) -> String {
    format!("depth_{index:06}.pgm")
}

pub const TRUTH_FILE: &str = "truth.json";
pub const FRAME_PATTERN: &str = "frame_*.ppm";
pub const DEPTH_PATTERN: &str = "depth_*.pgm";

/// Writes `frame_NNNNNN.ppm`, `depth_NNNNNN.pgm` and `truth.json` into `dir`.
pub fn write_sequence(seq: &SyntheticSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (frame, depth) in seq.frames.iter().zip(&seq.depths) {
        write_ppm(frame.width, frame.height, &frame.rgb, &dir.join(frame_file_name(frame.index)))?;
        write_depth_raster(depth, &dir.join(depth_file_name(frame.index)))?;
    }
    let json = serde_json::to_string_pretty(&seq.truth).map_err(|e| Error::InvalidParams(e.to_string()))?;
    std::fs::write(dir.join(TRUTH_FILE), json)?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Decode { path: path.to_path_buf(), reason: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ping_pong_bounces() {
        assert_eq!(ping_pong(60.0, 260.0, 0.0), 60.0);
        assert_eq!(ping_pong(60.0, 260.0, 200.0), 260.0);
        assert_eq!(ping_pong(60.0, 260.0, 210.0), 250.0);
        assert_eq!(ping_pong(60.0, 260.0, 400.0), 60.0);
    }

    #[test]
    fn limb_membership() {
        assert!(in_limb((5.0, 0.0), (0.0, 0.0), 0.0, 10.0, 2.0));
        assert!(!in_limb((11.0, 0.0), (0.0, 0.0), 0.0, 10.0, 2.0));
        assert!(in_limb((0.0, 5.0), (0.0, 0.0), FRAC_PI_2, 10.0, 2.0));
        assert!(!in_limb((3.0, 5.0), (0.0, 0.0), FRAC_PI_2, 10.0, 2.0));
    }

    #[test]
    fn scenario_names_round_trip() {
        for n in ScenarioName::ALL {
            assert_eq!(n.as_str().parse::<ScenarioName>().unwrap(), n);
        }
        assert!("dance".parse::<ScenarioName>().is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let mut s = Scenario::new(ScenarioName::Walker, 1);
        s.params.width = 100;
        assert!(matches!(generate_scenario(&s), Err(Error::InvalidParams(_))));
        let s = Scenario::new(ScenarioName::Walker, 1).with_frames(0);
        assert!(matches!(generate_scenario(&s), Err(Error::InvalidParams(_))));
        let mut s = Scenario::new(ScenarioName::Walker, 1);
        s.params.person_depth_mm = 20_000;
        assert!(matches!(generate_scenario(&s), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn box_colors_stay_in_gamut() {
        for (uv, levels) in [(BOX_UV, BOX_Y), (OPEN_BOX_UV, OPEN_BOX_Y)] {
            for y in [levels.0, levels.1] {
                let rgb = convert_yuv_to_rgb(y, uv.0, uv.1);
                let back = crate::imageio::convert_rgb_to_yuv(rgb[0], rgb[1], rgb[2]);
                for c in 0..3 {
                    assert!((back[c] as i32 - [y, uv.0, uv.1][c] as i32).abs() <= 2, "{back:?}");
                }
            }
        }
    }
}
