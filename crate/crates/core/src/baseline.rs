//! Silhouette-only part labeling from hull geometry and projections.

use serde::{Deserialize, Serialize};

use crate::blob::sym_eigen;
use crate::error::{Error, Result};
use crate::geometry::{Mask, Point};
use crate::maskops::convex_hull;

/// Length of the rescaled projections.
pub const PROJECTION_LEN: usize = 100;
pub const DEFAULT_D_MIN: f64 = 3.0;
pub const DEFAULT_KCOS_K: usize = 7;
pub const DEFAULT_KCOS_ANGLE_DEG: f64 = 140.0;

/// Pixel counts per integer coordinate along an axis, starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProjection {
    pub start: i64,
    pub counts: Vec<u32>,
}

impl RawProjection {
    fn from_coords(coords: &[f64]) -> Self {
        let bins: Vec<i64> = coords.iter().map(|t| t.round() as i64).collect();
        let lo = *bins.iter().min().expect("non-empty");
        let hi = *bins.iter().max().expect("non-empty");
        let mut counts = vec![0u32; (hi - lo + 1) as usize];
        for b in bins {
            counts[(b - lo) as usize] += 1;
        }
        Self { start: lo, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Piecewise-linear value at coordinate `t`, zero outside the support
    /// apart from the one-unit ramps at each end.
    pub fn sample(&self, t: f64) -> f64 {
        let at = |k: i64| -> f64 {
            let i = k - self.start;
            if i < 0 || i >= self.counts.len() as i64 {
                0.0
            } else {
                self.counts[i as usize] as f64
            }
        };
        let k0 = t.floor();
        let frac = t - k0;
        at(k0 as i64) * (1.0 - frac) + at(k0 as i64 + 1) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHistograms {
    /// Indexed along the minor axis (column sums for an upright figure).
    pub vertical: Vec<f64>,
    /// Indexed along the major axis (row sums for an upright figure).
    pub horizontal: Vec<f64>,
    pub median_index: usize,
    pub raw_vertical: RawProjection,
    pub raw_horizontal: RawProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteGeometry {
    pub centroid: (f64, f64),
    pub major_axis: (f64, f64),
    pub projections: ProjectionHistograms,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    (values[(n - 1) / 2] + values[n / 2]) / 2.0
}

/// Resamples `raw` onto `PROJECTION_LEN` points with the median coordinate
/// `med` at the center index.
fn rescale(raw: &RawProjection, med: f64) -> Vec<f64> {
    let lo = raw.start as f64;
    let hi = (raw.start + raw.counts.len() as i64 - 1) as f64;
    let half = PROJECTION_LEN as f64 / 2.0;
    let step = ((med - lo).max(hi - med) + 1.0) / half;
    (0..PROJECTION_LEN).map(|i| raw.sample(med + (i as f64 - half) * step)).collect()
}

/// Projections along a given axis pair; exposed for testing.
pub fn project(mask: &Mask, axis: (f64, f64)) -> Result<ProjectionHistograms> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let perp = (-axis.1, axis.0);
    let mut along = Vec::with_capacity(mask.count());
    let mut across = Vec::with_capacity(mask.count());
    for p in mask.points() {
        let (x, y) = (p.x as f64, p.y as f64);
        along.push(x * axis.0 + y * axis.1);
        across.push(x * perp.0 + y * perp.1);
    }
    let raw_horizontal = RawProjection::from_coords(&along);
    let raw_vertical = RawProjection::from_coords(&across);
    let horizontal = rescale(&raw_horizontal, median(&mut along));
    let vertical = rescale(&raw_vertical, median(&mut across));
    Ok(ProjectionHistograms { vertical, horizontal, median_index: PROJECTION_LEN / 2, raw_vertical, raw_horizontal })
}

pub fn silhouette_geometry(mask: &Mask) -> Result<SilhouetteGeometry> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i64, 0i64, 0i64, 0i64, 0i64, 0i64);
    for p in mask.points() {
        let (x, y) = (p.x as i64, p.y as i64);
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let n2 = (n * n) as f64;
    let k = [
        [(n * sxx - sx * sx) as f64 / n2, (n * sxy - sx * sy) as f64 / n2],
        [(n * sxy - sx * sy) as f64 / n2, (n * syy - sy * sy) as f64 / n2],
    ];
    let (_, _, angle) = sym_eigen(&k);
    let major_axis = (angle.cos(), angle.sin());
    Ok(SilhouetteGeometry {
        centroid: (sx as f64 / n as f64, sy as f64 / n as f64),
        major_axis,
        projections: project(mask, major_axis)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSet {
    pub convex: Vec<Point>,
    pub concave: Vec<Point>,
}

fn distance_to_line(a: Point, b: Point, p: Point) -> f64 {
    let (dx, dy) = ((b.x - a.x) as f64, (b.y - a.y) as f64);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return ((p.x - a.x) as f64).hypot((p.y - a.y) as f64);
    }
    (dx * (p.y - a.y) as f64 - dy * (p.x - a.x) as f64).abs() / len
}

/// Hull vertices of a closed contour, plus the deepest contour point between
/// each pair of consecutive hull vertices when it is at least `d_min` from
/// the hull edge.
pub fn hull_vertices(contour: &[Point], d_min: f64) -> Result<VertexSet> {
    if contour.len() < 3 {
        return Err(Error::DegenerateContour(contour.len()));
    }
    let convex = convex_hull(contour)?;
    if convex.len() < 3 {
        return Ok(VertexSet { convex, concave: Vec::new() });
    }
    let mut idx: Vec<usize> = convex
        .iter()
        .map(|v| contour.iter().position(|p| p == v).expect("hull vertices come from the contour"))
        .collect();
    idx.sort_unstable();
    let n = contour.len();
    let mut concave = Vec::new();
    for k in 0..idx.len() {
        let (i0, i1) = (idx[k], idx[(k + 1) % idx.len()]);
        let (a, b) = (contour[i0], contour[i1]);
        let span = (i1 + n - i0) % n;
        let mut best: Option<(f64, Point)> = None;
        for s in 1..span {
            let p = contour[(i0 + s) % n];
            let d = distance_to_line(a, b, p);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, p));
            }
        }
        if let Some((d, p)) = best {
            if d >= d_min {
                concave.push(p);
            }
        }
    }
    Ok(VertexSet { convex, concave })
}

/// Corners by the k-cosine measure: points whose angle between the chords
/// to the k-th neighbors on each side is below `max_angle_deg`, kept only
/// where the angle is a local minimum.
pub fn kcosine_corners(contour: &[Point], k: usize, max_angle_deg: f64) -> Vec<Point> {
    let n = contour.len();
    if k == 0 || n < 2 * k + 1 {
        return Vec::new();
    }
    let angle_at = |i: usize| {
        let p = contour[i];
        let a = contour[(i + n - k) % n];
        let b = contour[(i + k) % n];
        let (ax, ay) = ((a.x - p.x) as f64, (a.y - p.y) as f64);
        let (bx, by) = ((b.x - p.x) as f64, (b.y - p.y) as f64);
        let den = ax.hypot(ay) * bx.hypot(by);
        if den == 0.0 {
            return 180.0;
        }
        ((ax * bx + ay * by) / den).clamp(-1.0, 1.0).acos().to_degrees()
    };
    let angles: Vec<f64> = (0..n).map(angle_at).collect();
    let half = (k / 2).max(1);
    (0..n)
        .filter(|&i| {
            angles[i] < max_angle_deg
                && (1..=half).all(|d| angles[i] <= angles[(i + d) % n] && angles[i] < angles[(i + n - d) % n])
        })
        .map(|i| contour[i])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelParams {
    /// Head band half-width as a fraction of the bounding-box height.
    pub head_band: f64,
    /// Minimum horizontal foot separation as a fraction of the height.
    pub feet_separation: f64,
    /// Minimum lateral hand offset as a fraction of the height.
    pub hand_reach: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        Self { head_band: 0.25, feet_separation: 0.15, hand_reach: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartLabels {
    pub head: Option<Point>,
    pub feet: Vec<Point>,
    pub hands: Vec<Point>,
    pub torso: (f64, f64),
}

/// Labels hull vertices by their position relative to the centroid.
pub fn label_parts_by_distance(vertices: &VertexSet, centroid: (f64, f64), mask: &Mask, params: &LabelParams) -> PartLabels {
    let height = mask.bbox().map_or(0.0, |b| b.height as f64);
    let (cx, cy) = centroid;
    let dist = |p: &Point| (p.x as f64 - cx).hypot(p.y as f64 - cy);
    let tie = |a: &Point, b: &Point| a.x.cmp(&b.x).then(a.y.cmp(&b.y));

    let head = vertices
        .convex
        .iter()
        .filter(|p| (p.x as f64 - cx).abs() <= params.head_band * height)
        .min_by(|a, b| a.y.cmp(&b.y).then_with(|| tie(a, b)))
        .copied();

    let mut below: Vec<Point> = vertices.convex.iter().filter(|p| p.y as f64 > cy).copied().collect();
    below.sort_by(|a, b| dist(b).total_cmp(&dist(a)).then_with(|| tie(a, b)));
    let mut feet: Vec<Point> = Vec::new();
    for p in below {
        if feet.is_empty() || ((p.x - feet[0].x).abs() as f64) >= params.feet_separation * height {
            feet.push(p);
        }
        if feet.len() == 2 {
            break;
        }
    }

    let reach = params.hand_reach * height;
    let mut hands = Vec::new();
    for left in [true, false] {
        let side = vertices.convex.iter().filter(|p| {
            let dx = p.x as f64 - cx;
            (if left { -dx } else { dx }) > reach
        });
        let best = side.min_by(|a, b| {
            let (da, db) = ((a.x as f64 - cx).abs(), (b.x as f64 - cx).abs());
            db.total_cmp(&da).then_with(|| tie(a, b))
        });
        if let Some(&h) = best {
            hands.push(h);
        }
    }
    PartLabels { head, feet, hands, torso: centroid }
}
