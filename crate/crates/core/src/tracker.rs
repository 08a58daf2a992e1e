//! Person detection and tracking: connected components fused with a
//! mean-shift-refined particle filter, plus the torso disc.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mask, Rect};
use crate::hist::{bhattacharyya, check_normalized, hist_in_rect, hist_of_points, uv_bin, Hist16};
use crate::imageio::Frame;
use crate::maskops::{connected_components, ComponentStats, Connectivity, LabeledComponents};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonBlob {
    pub bbox: Rect,
    pub centroid: (f64, f64),
    pub area: usize,
    /// Width of the silhouette run through the centroid (median over a few rows).
    pub width: f64,
    /// Horizontal midpoint of that run.
    pub core_x: f64,
    pub ref_hist: Hist16,
    pub confidence: f64,
    pub velocity: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorsoDisc {
    pub center: (f64, f64),
    pub radius: f64,
}

impl TorsoDisc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        dx * dx + dy * dy <= self.radius * self.radius
    }

    pub fn top(&self) -> f64 {
        self.center.1 - self.radius
    }

    pub fn bottom(&self) -> f64 {
        self.center.1 + self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Window center.
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
}

impl ParticleSet {
    /// `n` particles at `center` with unit scale and uniform weights.
    pub fn new(n: usize, center: (f64, f64), seed: u64) -> Self {
        let w = 1.0 / n.max(1) as f64;
        Self {
            particles: vec![Particle { x: center.0, y: center.1, scale: 1.0, weight: w }; n.max(1)],
            rng_seed: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    fn shift(&mut self, dx: f64, dy: f64) {
        for p in &mut self.particles {
            p.x += dx;
            p.y += dy;
        }
    }

    /// Systematic resampling; leaves weights uniform.
    fn resample(&mut self) {
        let n = self.particles.len();
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        let uniform = 1.0 / n as f64;
        if !(total > 0.0) {
            self.particles.iter_mut().for_each(|p| p.weight = uniform);
            return;
        }
        let u0 = Uniform::new(0.0, uniform).expect("valid range").sample(&mut self.rng);
        let mut out = Vec::with_capacity(n);
        let mut cum = self.particles[0].weight / total;
        let mut i = 0;
        for k in 0..n {
            let u = u0 + k as f64 * uniform;
            while u > cum && i + 1 < n {
                i += 1;
                cum += self.particles[i].weight / total;
            }
            out.push(Particle { weight: uniform, ..self.particles[i] });
        }
        self.particles = out;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MspfParams {
    pub n_particles: usize,
    pub sigma_xy: f64,
    pub sigma_scale: f64,
    pub iou_gate: f64,
    pub coast_decay: f64,
    /// Sharpness of the particle likelihood exp(-lambda (1 - rho)).
    pub lambda: f64,
    pub ms_max_iter: usize,
    pub ms_eps: f64,
    /// Mean-shift window size relative to the particle window.
    pub window_expand: f64,
    /// Weight of the previous velocity in the running estimate.
    pub velocity_smoothing: f64,
}

impl Default for MspfParams {
    fn default() -> Self {
        Self {
            n_particles: 100,
            sigma_xy: 5.0,
            sigma_scale: 0.02,
            iou_gate: 0.3,
            coast_decay: 0.8,
            lambda: 20.0,
            ms_max_iter: 20,
            ms_eps: 1.0,
            window_expand: 1.25,
            velocity_smoothing: 0.5,
        }
    }
}

/// Per-pixel weights in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl WeightImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Sum of weights inside `rect` (clipped).
    pub fn window_sum(&self, rect: Rect) -> f64 {
        self.moments(rect).0
    }

    /// (sum, sum x, sum y) over `rect` (clipped).
    fn moments(&self, rect: Rect) -> (f64, f64, f64) {
        let r = rect.clip(self.width, self.height);
        let (mut s, mut sx, mut sy) = (0f64, 0f64, 0f64);
        for y in r.y..r.bottom() {
            let row = &self.data[y as usize * self.width..(y as usize + 1) * self.width];
            let mut rs = 0f64;
            let mut rsx = 0f64;
            for x in r.x..r.right() {
                let w = row[x as usize] as f64;
                rs += w;
                rsx += w * x as f64;
            }
            s += rs;
            sx += rsx;
            sy += rs * y as f64;
        }
        (s, sx, sy)
    }

    /// Zeroes every weight outside `mask`.
    pub fn masked(mut self, mask: &Mask) -> Self {
        for (w, &m) in self.data.iter_mut().zip(&mask.bits) {
            if !m {
                *w = 0.0;
            }
        }
        self
    }
}

/// Replaces each pixel by the histogram value of its (U, V) bin.
pub fn back_project(frame: &Frame, hist: &Hist16) -> Result<WeightImage> {
    check_normalized(hist)?;
    let lut = hist.map(|v| v as f32);
    Ok(WeightImage {
        width: frame.width,
        height: frame.height,
        data: frame.yuv.iter().map(|&[_, u, v]| lut[uv_bin(u, v)]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftResult {
    pub window: Rect,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted centroid of the final window, if it holds any weight.
    pub centroid: Option<(f64, f64)>,
    /// Window weight sum before the first and after every accepted step.
    pub trace: Vec<f64>,
}

/// Moves `win` to lie inside the frame without changing its size (unless it
/// is larger than the frame).
fn place(win: Rect, width: usize, height: usize) -> Rect {
    let ww = win.width.min(width as i32).max(1);
    let hh = win.height.min(height as i32).max(1);
    Rect::new(win.x.clamp(0, width as i32 - ww), win.y.clamp(0, height as i32 - hh), ww, hh)
}

/// Flat-kernel mean shift. Each step moves the window toward the weighted
/// centroid of its contents; a step that would lower the window sum is
/// halved until it does not, and a step that rounds to zero ends the search.
pub fn mean_shift(weights: &WeightImage, window: Rect, max_iter: usize, eps: f64) -> MeanShiftResult {
    let mut win = place(window, weights.width, weights.height);
    let (mut sum, mut sx, mut sy) = weights.moments(win);
    if !(sum > 0.0) {
        return MeanShiftResult { window, iterations: 0, converged: false, centroid: None, trace: vec![0.0] };
    }
    let mut trace = vec![sum];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (cx, cy) = win.center();
        let (dx, dy) = (sx / sum - cx, sy / sum - cy);
        if dx.hypot(dy) < eps {
            converged = true;
            break;
        }
        let (mut stx, mut sty) = (dx.round() as i32, dy.round() as i32);
        let mut accepted = false;
        while stx != 0 || sty != 0 {
            let cand = place(win.translate(stx, sty), weights.width, weights.height);
            if cand == win {
                break;
            }
            let m = weights.moments(cand);
            if m.0 >= sum {
                win = cand;
                (sum, sx, sy) = m;
                trace.push(sum);
                accepted = true;
                break;
            }
            stx /= 2;
            sty /= 2;
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    MeanShiftResult { window: win, iterations, converged, centroid: Some((sx / sum, sy / sum)), trace }
}

/// Horizontal run of `is_set` through `(cx, row)` as (midpoint, width), or
/// `None` if that pixel is not set.
fn run_at(is_set: impl Fn(i32, i32) -> bool, width: usize, cx: i32, row: i32) -> Option<(f64, f64)> {
    if !is_set(cx, row) {
        return None;
    }
    let mut l = cx;
    while l > 0 && is_set(l - 1, row) {
        l -= 1;
    }
    let mut r = cx;
    while (r + 1) < width as i32 && is_set(r + 1, row) {
        r += 1;
    }
    Some(((l + r) as f64 / 2.0, (r - l + 1) as f64))
}

/// Run through the centroid column with the median width over rows
/// `cy ± 2`, as (midpoint, width).
pub fn core_run_by(is_set: impl Fn(i32, i32) -> bool, width: usize, centroid: (f64, f64)) -> Option<(f64, f64)> {
    let cx = centroid.0.round() as i32;
    let cy = centroid.1.round() as i32;
    let mut runs: Vec<(f64, f64)> = (cy - 2..=cy + 2).filter_map(|row| run_at(&is_set, width, cx, row)).collect();
    if runs.is_empty() {
        return None;
    }
    runs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    Some(runs[runs.len() / 2])
}

pub fn core_run(mask: &Mask, centroid: (f64, f64)) -> Option<(f64, f64)> {
    core_run_by(|x, y| mask.get_checked(x, y), mask.width, centroid)
}

fn component_run(cc: &LabeledComponents, s: &ComponentStats) -> (f64, f64) {
    let (w, h) = (cc.width as i32, cc.height as i32);
    let label = s.label;
    core_run_by(
        |x, y| x >= 0 && y >= 0 && x < w && y < h && cc.labels[(y * w + x) as usize] == label,
        cc.width,
        s.centroid,
    )
    .unwrap_or((s.centroid.0, s.bbox.width as f64))
}

/// Person blob from the largest component with area at least `min_area`.
pub fn detect_person(components: &LabeledComponents, frame: &Frame, min_area: usize) -> Option<PersonBlob> {
    let s = components.largest().filter(|s| s.area >= min_area.max(1))?;
    let ref_hist = hist_of_points(frame, &components.pixels_of(s.label)).ok()?;
    let (core_x, width) = component_run(components, s);
    Some(PersonBlob {
        bbox: s.bbox,
        centroid: s.centroid,
        area: s.area,
        width,
        core_x,
        ref_hist,
        confidence: 1.0,
        velocity: (0.0, 0.0),
    })
}

/// Disc of radius half the person width, centered on the midpoint of the
/// silhouette run through the centroid at the centroid's height. The radius
/// shrinks if needed so the disc stays within the bounding box horizontally.
pub fn torso_from_person(person: &PersonBlob) -> Result<TorsoDisc> {
    torso_disc(person.core_x, person.centroid.1, person.width, person.bbox)
}

pub fn torso_disc(cx: f64, cy: f64, width: f64, bbox: Rect) -> Result<TorsoDisc> {
    if !(width >= 2.0) {
        return Err(Error::DegenerateWidth(width));
    }
    let left = cx - bbox.x as f64;
    let right = bbox.right() as f64 - cx;
    let radius = (width / 2.0).min(left).min(right);
    if !(radius > 0.0) {
        return Err(Error::DegenerateWidth(width));
    }
    Ok(TorsoDisc { center: (cx, cy), radius })
}

fn coast(prev: &PersonBlob, particles: &mut ParticleSet, params: &MspfParams) -> PersonBlob {
    let (vx, vy) = prev.velocity;
    particles.shift(vx, vy);
    let centroid = (prev.centroid.0 + vx, prev.centroid.1 + vy);
    let (bx, by) = prev.bbox.center();
    PersonBlob {
        core_x: prev.core_x + vx,
        bbox: Rect::centered_at(bx + vx, by + vy, prev.bbox.width, prev.bbox.height),
        centroid,
        confidence: prev.confidence * params.coast_decay,
        ..prev.clone()
    }
}

/// One tracking step. Computes components of `fg` itself; see
/// [`mspf_track_with`] to reuse existing ones.
pub fn mspf_track(prev: &PersonBlob, particles: &mut ParticleSet, frame: &Frame, fg: &Mask, params: &MspfParams) -> Result<PersonBlob> {
    let cc = connected_components(fg, Connectivity::Eight);
    mspf_track_with(prev, particles, frame, fg, &cc, params)
}

pub fn mspf_track_with(
    prev: &PersonBlob,
    particles: &mut ParticleSet,
    frame: &Frame,
    fg: &Mask,
    components: &LabeledComponents,
    params: &MspfParams,
) -> Result<PersonBlob> {
    if fg.width != frame.width || fg.height != frame.height {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs frame {}x{}",
            fg.width, fg.height, frame.width, frame.height
        )));
    }
    if fg.is_empty() {
        return Ok(coast(prev, particles, params));
    }

    // predict
    let (vx, vy) = prev.velocity;
    let pos_noise = Normal::new(0.0, params.sigma_xy).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let scale_noise = Normal::new(0.0, params.sigma_scale).map_err(|e| Error::InvalidParams(e.to_string()))?;
    for p in &mut particles.particles {
        p.x += vx + pos_noise.sample(&mut particles.rng);
        p.y += vy + pos_noise.sample(&mut particles.rng);
        p.scale = (p.scale + scale_noise.sample(&mut particles.rng)).clamp(0.5, 2.0);
    }

    // weight
    let window_of = |p: &Particle| {
        let w = ((prev.bbox.width as f64 * p.scale).round() as i32).max(1);
        let h = ((prev.bbox.height as f64 * p.scale).round() as i32).max(1);
        Rect::centered_at(p.x, p.y, w, h)
    };
    for p in &mut particles.particles {
        let rho = hist_in_rect(frame, window_of(p), Some(fg)).map_or(0.0, |h| bhattacharyya(&h, &prev.ref_hist));
        p.weight = (-params.lambda * (1.0 - rho)).exp();
    }
    let best = particles
        .particles
        .iter()
        .fold(None::<Particle>, |b, p| match b {
            Some(b) if b.weight >= p.weight => Some(b),
            _ => Some(*p),
        })
        .expect("non-empty particle set");

    // refine the best particle with mean shift over the masked back-projection
    let weights = back_project(frame, &prev.ref_hist)?.masked(fg);
    let best_win = window_of(&best);
    let ms = mean_shift(&weights, best_win.scaled(params.window_expand), params.ms_max_iter, params.ms_eps);
    let (mcx, mcy) = ms.window.center();
    let est_centroid = ms.centroid.unwrap_or((mcx, mcy));
    let est_bbox = Rect::centered_at(mcx, mcy, best_win.width, best_win.height);

    // fuse with the largest component
    let fused = components.largest().filter(|s| est_bbox.iou(&s.bbox) > params.iou_gate);
    let (centroid, bbox, area, (core_x, width)) = match fused {
        Some(s) => {
            let centroid = ((est_centroid.0 + s.centroid.0) / 2.0, (est_centroid.1 + s.centroid.1) / 2.0);
            let run = component_run(components, s);
            (centroid, s.bbox, s.area, (run.0 + centroid.0 - s.centroid.0, run.1))
        }
        None => (est_centroid, est_bbox, prev.area, (prev.core_x + est_centroid.0 - prev.centroid.0, prev.width)),
    };

    particles.resample();
    let (fx, fy) = bbox.center();
    particles.shift(fx - best.x, fy - best.y);
    if fused.is_some() {
        // scales are relative to the bbox, which was just re-measured
        particles.particles.iter_mut().for_each(|p| p.scale = 1.0);
    }

    let a = params.velocity_smoothing;
    let velocity = (
        a * vx + (1.0 - a) * (centroid.0 - prev.centroid.0),
        a * vy + (1.0 - a) * (centroid.1 - prev.centroid.1),
    );
    let confidence = hist_in_rect(frame, bbox, Some(fg)).map_or(0.0, |h| bhattacharyya(&h, &prev.ref_hist));
    Ok(PersonBlob {
        bbox,
        centroid,
        area,
        width,
        core_x,
        ref_hist: prev.ref_hist,
        confidence,
        velocity,
    })
}
