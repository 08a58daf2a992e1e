//! Frame-by-frame pipeline: scene model, silhouette, person track, part
//! blobs and activity events.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use hbpt_core::activity::{ActivityEvent, ActivityRecognizer};
use hbpt_core::baseline::{hull_vertices, kcosine_corners, label_parts_by_distance, silhouette_geometry, PartLabels};
use hbpt_core::blob::{blob_ellipse, GaussianBlob, PartLabel};
use hbpt_core::bodyparts::{build_part_model, detect_starfish, partition_regions, BodyPartModel, HandPoint};
use hbpt_core::imageio::{list_sequence, load_depth_raster, load_frame, write_annotated_frame, DepthRaster, Frame, OverlayItem, Shape};
use hbpt_core::maskops::{
    approximate_contour, connected_components, extract_contours, morph, refine_mask_with, Connectivity, ContourLevel,
    LabeledComponents, MorphOp, StructuringElement,
};
use hbpt_core::scene::{detect_foreground, learn_scene, update_scene, SceneModel};
use hbpt_core::tracker::{detect_person, mspf_track_with, torso_from_person, ParticleSet, PersonBlob, TorsoDisc};
use hbpt_core::{Mask, Point, Rect};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const BLOBS_FILE: &str = "blobs.jsonl";
pub const EVENTS_FILE: &str = "events.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const BASELINE_FILE: &str = "baseline.jsonl";
pub const SCENE_FILE: &str = "scene.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub bbox: Rect,
    pub centroid: (f64, f64),
    pub area: usize,
    pub confidence: f64,
    pub torso: Option<TorsoDisc>,
}

/// One line of `blobs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    /// Frame consumed by scene learning; nothing is tracked.
    pub learning: bool,
    pub person: Option<PersonRecord>,
    pub blobs: Vec<GaussianBlob>,
    pub created: Vec<PartLabel>,
    pub deleted: Vec<PartLabel>,
    pub hands: Vec<HandPoint>,
    pub starfish: bool,
    pub box_rect: Option<Rect>,
}

impl FrameRecord {
    fn learning(frame: usize) -> Self {
        Self {
            frame,
            learning: true,
            person: None,
            blobs: Vec::new(),
            created: Vec::new(),
            deleted: Vec::new(),
            hands: Vec::new(),
            starfish: false,
            box_rect: None,
        }
    }

    pub fn blob(&self, label: PartLabel) -> Option<&GaussianBlob> {
        self.blobs.iter().find(|b| b.label == label)
    }
}

/// One line of `baseline.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub frame: usize,
    pub centroid: (f64, f64),
    pub major_axis: (f64, f64),
    pub convex: Vec<Point>,
    pub concave: Vec<Point>,
    pub corners: Vec<Point>,
    pub labels: PartLabels,
    pub vertical: Vec<f64>,
    pub horizontal: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub decode: f64,
    pub foreground: f64,
    pub refine: f64,
    pub components: f64,
    pub track: f64,
    pub parts: f64,
    pub scene_update: f64,
    pub activity: f64,
    pub baseline: f64,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub frames: usize,
    pub learning_frames: usize,
    pub wall_ms: f64,
    /// `frames` divided by the wall time.
    pub fps: f64,
    /// Total milliseconds spent per stage.
    pub stages_ms: StageTimes,
    pub events: usize,
}

/// Output of one pipeline step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub record: FrameRecord,
    pub events: Vec<ActivityEvent>,
    pub silhouette: Option<Mask>,
    pub baseline: Option<BaselineRecord>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Pixel count of each label inside `rect`; returns the label with the
/// most pixels (lowest label on ties).
fn best_overlap(cc: &LabeledComponents, rect: Rect) -> Option<u32> {
    let r = rect.clip(cc.width, cc.height);
    if r.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; cc.len() + 1];
    for y in r.y..r.bottom() {
        for x in r.x..r.right() {
            counts[cc.labels[y as usize * cc.width + x as usize] as usize] += 1;
        }
    }
    (1..counts.len()).filter(|&l| counts[l] > 0).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).map(|l| l as u32)
}

/// Keeps silhouette pixels whose depth is unknown or within `gate_mm` of
/// the silhouette's median depth, then the largest remaining piece.
fn depth_gate(sil: &Mask, depth: &DepthRaster, gate_mm: f64) -> Mask {
    let mut zs: Vec<u16> = sil.points().map(|p| depth.get(p.x as usize, p.y as usize)).filter(|&z| z > 0).collect();
    if zs.is_empty() {
        return sil.clone();
    }
    zs.sort_unstable();
    let med = zs[zs.len() / 2] as f64;
    let gated = Mask::from_fn(sil.width, sil.height, |x, y| {
        let z = depth.get(x, y);
        sil.get(x, y) && (z == 0 || (z as f64 - med).abs() <= gate_mm)
    });
    let cc = connected_components(&gated, Connectivity::Eight);
    match cc.largest() {
        Some(s) => cc.mask_of(s.label),
        None => sil.clone(),
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    scene: Option<SceneModel>,
    learn_buf: Vec<Frame>,
    person: Option<PersonBlob>,
    particles: Option<ParticleSet>,
    prev_model: Option<BodyPartModel>,
    recognizer: ActivityRecognizer,
    box_ready: bool,
    pub times: StageTimes,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let recognizer = ActivityRecognizer::new(config.activity);
        Self {
            config,
            scene: None,
            learn_buf: Vec::new(),
            person: None,
            particles: None,
            prev_model: None,
            recognizer,
            box_ready: false,
            times: StageTimes::default(),
        }
    }

    pub fn with_scene(config: PipelineConfig, scene: SceneModel) -> Self {
        let mut p = Self::new(config);
        p.scene = Some(scene);
        p
    }

    pub fn scene(&self) -> Option<&SceneModel> {
        self.scene.as_ref()
    }

    pub fn person(&self) -> Option<&PersonBlob> {
        self.person.as_ref()
    }

    pub fn step(&mut self, frame: &Frame, depth: Option<&DepthRaster>) -> Result<StepOutput> {
        let cfg = self.config.clone();
        if !self.box_ready && frame.index >= cfg.box_region.ref_frame {
            if let Some(rect) = cfg.box_region.rect() {
                self.recognizer.set_box(frame, rect).context("box reference histogram")?;
            }
            self.box_ready = true;
        }
        let Some(scene) = self.scene.as_mut() else {
            self.learn_buf.push(frame.clone());
            if self.learn_buf.len() >= cfg.scene.learn_frames {
                self.scene = Some(learn_scene(&self.learn_buf, cfg.scene.var_floor)?);
                self.learn_buf.clear();
            }
            return Ok(StepOutput { record: FrameRecord::learning(frame.index), events: Vec::new(), silhouette: None, baseline: None });
        };

        let t = Instant::now();
        let fg = detect_foreground(scene, frame, cfg.scene.tau)?;
        self.times.foreground += ms(t.elapsed());

        let t = Instant::now();
        let min_area = cfg.refine.min_area(frame.width, frame.height);
        let refined = refine_mask_with(&fg, min_area, cfg.refine.params());
        self.times.refine += ms(t.elapsed());

        let t = Instant::now();
        let cc = connected_components(&refined, Connectivity::Eight);
        self.times.components += ms(t.elapsed());

        let t = Instant::now();
        self.person = match (self.person.take(), self.particles.as_mut()) {
            (Some(prev), Some(particles)) => {
                let next = mspf_track_with(&prev, particles, frame, &refined, &cc, &cfg.tracker)?;
                (next.confidence >= cfg.person.drop_confidence).then_some(next)
            }
            _ => detect_person(&cc, frame, min_area),
        };
        match &self.person {
            Some(p) if self.particles.is_none() => {
                let seed = cfg.seed ^ (frame.index as u64).wrapping_mul(0x2545_F491_4F6C_DD1D);
                self.particles = Some(ParticleSet::new(cfg.tracker.n_particles, p.centroid, seed));
            }
            None => self.particles = None,
            _ => {}
        }
        self.times.track += ms(t.elapsed());

        let t = Instant::now();
        let mut silhouette = self
            .person
            .as_ref()
            .and_then(|p| best_overlap(&cc, p.bbox))
            .map(|label| cc.mask_of(label));
        if let (Some(sil), Some(depth), true) = (silhouette.as_mut(), depth, cfg.use_depth) {
            *sil = depth_gate(sil, depth, cfg.person.depth_gate_mm);
        }
        let mut torso = None;
        let mut model = None;
        if let (Some(person), Some(sil)) = (&self.person, &silhouette) {
            if let (Ok(disc), Some(bbox)) = (torso_from_person(person), sil.bbox()) {
                let partition = partition_regions(sil, &disc, bbox)?;
                model = Some(build_part_model(&partition, frame, self.prev_model.as_ref(), cfg.parts.min_part_area)?);
                torso = Some(disc);
            }
        }
        let model = match model {
            Some(m) => m,
            None => BodyPartModel {
                frame_index: frame.index,
                blobs: Default::default(),
                created: Vec::new(),
                deleted: self.prev_model.as_ref().map(|p| p.blobs.keys().copied().collect()).unwrap_or_default(),
                hands: Vec::new(),
            },
        };
        self.times.parts += ms(t.elapsed());

        let t = Instant::now();
        let guard = match &silhouette {
            Some(sil) if cfg.scene.update_guard > 0 => morph(sil, MorphOp::Dilate, StructuringElement::square(3), cfg.scene.update_guard),
            Some(sil) => sil.clone(),
            None => Mask::new(frame.width, frame.height),
        };
        update_scene(scene, frame, &guard, cfg.scene.alpha)?;
        self.times.scene_update += ms(t.elapsed());

        let t = Instant::now();
        let events = self.recognizer.step(
            frame,
            torso.is_some().then_some(&model),
            silhouette.as_ref(),
            depth.filter(|_| cfg.use_depth),
        )?;
        self.times.activity += ms(t.elapsed());

        let t = Instant::now();
        let baseline = match (&silhouette, cfg.baseline_mode) {
            (Some(sil), true) => baseline_record(frame.index, sil, &cfg)?,
            _ => None,
        };
        self.times.baseline += ms(t.elapsed());

        let record = FrameRecord {
            frame: frame.index,
            learning: false,
            person: self.person.as_ref().map(|p| PersonRecord {
                bbox: p.bbox,
                centroid: p.centroid,
                area: p.area,
                confidence: p.confidence,
                torso,
            }),
            blobs: model.blobs.values().cloned().collect(),
            created: model.created.clone(),
            deleted: model.deleted.clone(),
            hands: model.hands.clone(),
            starfish: torso.is_some_and(|d| detect_starfish(&model, &d)),
            box_rect: self.recognizer.region.as_ref().map(|r| r.tracked_rect),
        };
        self.prev_model = torso.is_some().then_some(model);
        Ok(StepOutput { record, events, silhouette, baseline })
    }
}

/// Hull-vertex labeling of one silhouette.
pub fn baseline_record(frame: usize, sil: &Mask, cfg: &PipelineConfig) -> Result<Option<BaselineRecord>> {
    let contours = extract_contours(sil);
    let Some(outer) = contours
        .iter()
        .filter(|c| c.level == ContourLevel::Outer)
        .max_by_key(|c| c.points.len())
    else {
        return Ok(None);
    };
    if outer.points.len() < 3 {
        return Ok(None);
    }
    let geom = silhouette_geometry(sil)?;
    let vertices = hull_vertices(&outer.points, cfg.baseline.d_min)?;
    let corners = kcosine_corners(&approximate_contour(outer), cfg.baseline.kcos_k, cfg.baseline.kcos_angle_deg);
    let labels = label_parts_by_distance(&vertices, geom.centroid, sil, &cfg.baseline.labels);
    Ok(Some(BaselineRecord {
        frame,
        centroid: geom.centroid,
        major_axis: geom.major_axis,
        convex: vertices.convex,
        concave: vertices.concave,
        corners,
        labels,
        vertical: geom.projections.vertical,
        horizontal: geom.projections.horizontal,
    }))
}

fn overlays(record: &FrameRecord) -> Vec<OverlayItem> {
    let mut items = Vec::new();
    if let Some(p) = &record.person {
        items.push(OverlayItem::new(Shape::Rectangle { rect: p.bbox }, "person"));
    }
    for b in &record.blobs {
        let e = blob_ellipse(b, 2.0);
        items.push(OverlayItem::new(
            Shape::Ellipse { center: (e.center[0], e.center[1]), semi_axes: (e.semi_axes[0], e.semi_axes[1]), angle: e.angle },
            b.label.as_str(),
        ));
    }
    for h in &record.hands {
        items.push(OverlayItem::new(Shape::Rectangle { rect: Rect::new(h.point.x - 2, h.point.y - 2, 5, 5) }, "hand"));
    }
    if let Some(r) = record.box_rect {
        items.push(OverlayItem::new(Shape::Rectangle { rect: r }, "box"));
    }
    items
}

/// Frame and depth files of an input directory.
pub struct InputSequence {
    pub frames: Vec<PathBuf>,
    pub depths: Option<Vec<PathBuf>>,
}

pub fn open_input(cfg: &PipelineConfig) -> Result<InputSequence> {
    let dir = &cfg.input;
    if !dir.is_dir() {
        bail!("input directory {} does not exist", dir.display());
    }
    let frames = list_sequence(dir, &cfg.frame_pattern).with_context(|| format!("listing {}", dir.display()))?;
    if frames.is_empty() {
        bail!("no frames matching '{}' in {}", cfg.frame_pattern, dir.display());
    }
    let depths = if cfg.use_depth {
        let d = list_sequence(dir, &cfg.depth_pattern)?;
        match d.len() {
            0 => None,
            n if n == frames.len() => Some(d),
            n => bail!("{} has {} frames but {n} depth rasters", dir.display(), frames.len()),
        }
    } else {
        None
    };
    Ok(InputSequence { frames, depths })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Runs `track` over the configured input and writes `blobs.jsonl`,
/// `events.json`, `metrics.json` and, if enabled, overlays and baseline
/// records.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Metrics> {
    cfg.validate()?;
    let input = open_input(cfg)?;
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let overlay_dir = cfg.output.join("overlays");
    if cfg.emit_overlays {
        fs::create_dir_all(&overlay_dir)?;
    }
    let mut blobs = BufWriter::new(File::create(cfg.output.join(BLOBS_FILE))?);
    let mut baseline = if cfg.baseline_mode {
        Some(BufWriter::new(File::create(cfg.output.join(BASELINE_FILE))?))
    } else {
        None
    };
    let mut pipeline = Pipeline::new(cfg.clone());
    let mut events = Vec::new();
    let mut learning_frames = 0;
    let start = Instant::now();
    for (i, path) in input.frames.iter().enumerate() {
        let t = Instant::now();
        let frame = load_frame(path, i)?;
        let depth = match &input.depths {
            Some(d) => Some(load_depth_raster(&d[i])?),
            None => None,
        };
        pipeline.times.decode += ms(t.elapsed());

        let out = pipeline.step(&frame, depth.as_ref())?;

        let t = Instant::now();
        learning_frames += usize::from(out.record.learning);
        serde_json::to_writer(&mut blobs, &out.record)?;
        blobs.write_all(b"\n")?;
        if let (Some(w), Some(b)) = (baseline.as_mut(), &out.baseline) {
            serde_json::to_writer(&mut *w, b)?;
            w.write_all(b"\n")?;
        }
        if cfg.emit_overlays {
            write_annotated_frame(&frame, &overlays(&out.record), &overlay_dir.join(format!("frame_{i:06}.ppm")))?;
        }
        events.extend(out.events);
        pipeline.times.output += ms(t.elapsed());
    }
    blobs.flush()?;
    if let Some(w) = baseline.as_mut() {
        w.flush()?;
    }
    write_json(&cfg.output.join(EVENTS_FILE), &events)?;
    let wall = start.elapsed().as_secs_f64();
    let metrics = Metrics {
        frames: input.frames.len(),
        learning_frames,
        wall_ms: wall * 1e3,
        fps: input.frames.len() as f64 / wall,
        stages_ms: pipeline.times,
        events: events.len(),
    };
    write_json(&cfg.output.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

/// Learns the scene model from the first frames and writes `scene.bin`.
pub fn run_learn(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let input = open_input(cfg)?;
    let n = cfg.scene.learn_frames.min(input.frames.len());
    let frames = input.frames[..n].iter().enumerate().map(|(i, p)| load_frame(p, i)).collect::<hbpt_core::Result<Vec<_>>>()?;
    let model = learn_scene(&frames, cfg.scene.var_floor)?;
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join(SCENE_FILE);
    model.save(&path)?;
    Ok(path)
}

/// Runs silhouette extraction plus the hull-vertex labeler and writes
/// `baseline.jsonl`. Returns the number of labeled frames.
pub fn run_baseline(cfg: &PipelineConfig) -> Result<usize> {
    let mut cfg = cfg.clone();
    cfg.baseline_mode = true;
    cfg.box_region.rect = None;
    cfg.validate()?;
    let input = open_input(&cfg)?;
    fs::create_dir_all(&cfg.output)?;
    let mut out = BufWriter::new(File::create(cfg.output.join(BASELINE_FILE))?);
    let mut pipeline = Pipeline::new(cfg.clone());
    let mut labeled = 0;
    for (i, path) in input.frames.iter().enumerate() {
        let frame = load_frame(path, i)?;
        let depth = match &input.depths {
            Some(d) => Some(load_depth_raster(&d[i])?),
            None => None,
        };
        if let Some(b) = pipeline.step(&frame, depth.as_ref())?.baseline {
            serde_json::to_writer(&mut out, &b)?;
            out.write_all(b"\n")?;
            labeled += 1;
        }
    }
    out.flush()?;
    Ok(labeled)
}

pub fn read_blobs(path: &Path) -> Result<Vec<FrameRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

pub fn read_events(path: &Path) -> Result<Vec<ActivityEvent>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_prefers_most_pixels() {
        let mut m = Mask::new(20, 10);
        for x in 0..4 {
            m.set(x, 0, true);
        }
        for x in 10..20 {
            for y in 0..3 {
                m.set(x, y, true);
            }
        }
        let cc = connected_components(&m, Connectivity::Eight);
        assert_eq!(best_overlap(&cc, Rect::new(0, 0, 20, 10)), Some(2));
        assert_eq!(best_overlap(&cc, Rect::new(0, 0, 5, 5)), Some(1));
        assert_eq!(best_overlap(&cc, Rect::new(5, 5, 3, 3)), None);
    }

    #[test]
    fn depth_gate_drops_far_pixels() {
        let sil = Mask::from_fn(10, 4, |x, _| x < 8);
        let z = (0..40).map(|i| if i % 10 >= 5 { 4000 } else { 2000 }).collect();
        let depth = DepthRaster { width: 10, height: 4, z };
        let gated = depth_gate(&sil, &depth, 500.0);
        assert_eq!(gated.count(), 20);
        assert!(gated.get(4, 0) && !gated.get(5, 0));
    }
}
