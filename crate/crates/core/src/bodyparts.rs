//! Torso-relative region partition and the per-frame part model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blob::{fit_blob, GaussianBlob, PartLabel};
use crate::error::{Error, Result};
use crate::geometry::{Mask, Point, Rect};
use crate::imageio::Frame;
use crate::maskops::{connected_components, Connectivity};
use crate::tracker::TorsoDisc;

pub const DEFAULT_MIN_PART_AREA: usize = 15;

/// Region masks keyed by part label; the torso entry is the central
/// region inside the disc.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub masks: BTreeMap<PartLabel, Mask>,
    pub bbox: Rect,
    pub torso: TorsoDisc,
}

impl RegionPartition {
    pub fn mask(&self, label: PartLabel) -> &Mask {
        &self.masks[&label]
    }

    pub fn central(&self) -> &Mask {
        self.mask(PartLabel::Torso)
    }
}

/// Region of a silhouette pixel, or `None` for the unassigned corners
/// beside the disc and the far-lateral area below it.
pub fn classify_pixel(x: i32, y: i32, torso: &TorsoDisc, bbox_bottom: i32) -> Option<PartLabel> {
    let (cx, cy) = torso.center;
    let r = torso.radius;
    let (fx, fy) = (x as f64, y as f64);
    let dx = fx - cx;
    let dy = fy - cy;
    if dx * dx + dy * dy <= r * r {
        return Some(PartLabel::Torso);
    }
    let top = cy - r;
    let bottom = cy + r;
    if dx.abs() > r {
        if fy <= bottom {
            return Some(if dx < 0.0 { PartLabel::ArmL } else { PartLabel::ArmR });
        }
        return None;
    }
    if fy < top {
        return Some(PartLabel::Head);
    }
    if fy > bottom && y <= bbox_bottom {
        let mid = (bottom + bbox_bottom as f64) / 2.0;
        let left = dx < 0.0;
        let upper = fy < mid;
        return Some(match (left, upper) {
            (true, true) => PartLabel::Leg1,
            (false, true) => PartLabel::Leg2,
            (true, false) => PartLabel::Leg3,
            (false, false) => PartLabel::Leg4,
        });
    }
    None
}

pub fn partition_regions(silhouette: &Mask, torso: &TorsoDisc, bbox: Rect) -> Result<RegionPartition> {
    if silhouette.is_empty() {
        return Err(Error::EmptySilhouette);
    }
    let (w, h) = (silhouette.width, silhouette.height);
    let mut masks: BTreeMap<PartLabel, Mask> = PartLabel::ALL.iter().map(|&l| (l, Mask::new(w, h))).collect();
    let bbox_bottom = bbox.bottom() - 1;
    for p in silhouette.points() {
        if !bbox.contains(p.x, p.y) {
            continue;
        }
        if let Some(label) = classify_pixel(p.x, p.y, torso, bbox_bottom) {
            masks.get_mut(&label).expect("all labels present").set(p.x as usize, p.y as usize, true);
        }
    }
    Ok(RegionPartition { masks, bbox, torso: *torso })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPoint {
    pub label: PartLabel,
    pub point: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPartModel {
    pub frame_index: usize,
    pub blobs: BTreeMap<PartLabel, GaussianBlob>,
    /// Labels whose blob appeared this frame after being absent.
    pub created: Vec<PartLabel>,
    /// Labels whose blob was dropped this frame.
    pub deleted: Vec<PartLabel>,
    /// Distal point of each present arm: the arm pixel farthest from the
    /// torso center.
    pub hands: Vec<HandPoint>,
}

impl BodyPartModel {
    pub fn present(&self, label: PartLabel) -> bool {
        self.blobs.contains_key(&label)
    }

    pub fn torso(&self) -> Option<&GaussianBlob> {
        self.blobs.get(&PartLabel::Torso)
    }

    pub fn get(&self, label: PartLabel) -> Option<&GaussianBlob> {
        self.blobs.get(&label)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }
}

/// Fits one blob per region from the region's largest 8-connected piece,
/// dropping regions whose piece is smaller than `min_part_area`.
pub fn build_part_model(
    partition: &RegionPartition,
    frame: &Frame,
    prev: Option<&BodyPartModel>,
    min_part_area: usize,
) -> Result<BodyPartModel> {
    let mut blobs = BTreeMap::new();
    let mut hands = Vec::new();
    for (&label, mask) in &partition.masks {
        if mask.count() < min_part_area.max(1) {
            continue;
        }
        let cc = connected_components(mask, Connectivity::Eight);
        let Some(largest) = cc.largest() else { continue };
        if largest.area < min_part_area.max(1) {
            continue;
        }
        let pixels = cc.pixels_of(largest.label);
        blobs.insert(label, fit_blob(&pixels, frame, label)?);
        if matches!(label, PartLabel::ArmL | PartLabel::ArmR) {
            let (cx, cy) = partition.torso.center;
            let far = pixels
                .iter()
                .copied()
                .max_by(|a, b| {
                    let da = (a.x as f64 - cx).hypot(a.y as f64 - cy);
                    let db = (b.x as f64 - cx).hypot(b.y as f64 - cy);
                    da.total_cmp(&db).then_with(|| b.cmp(a))
                })
                .expect("non-empty component");
            hands.push(HandPoint { label, point: far });
        }
    }
    let (created, deleted) = match prev {
        Some(p) => (
            blobs.keys().filter(|l| !p.present(**l)).copied().collect(),
            p.blobs.keys().filter(|l| !blobs.contains_key(*l)).copied().collect(),
        ),
        None => (blobs.keys().copied().collect(), Vec::new()),
    };
    Ok(BodyPartModel { frame_index: frame.index, blobs, created, deleted, hands })
}

/// Both arms extended well past the disc sides with the head above it.
pub fn detect_starfish(model: &BodyPartModel, torso: &TorsoDisc) -> bool {
    let (Some(head), Some(al), Some(ar)) = (model.get(PartLabel::Head), model.get(PartLabel::ArmL), model.get(PartLabel::ArmR)) else {
        return false;
    };
    let (cx, _) = torso.center;
    let reach = 1.5 * torso.radius;
    cx - al.mu[0] >= reach && ar.mu[0] - cx >= reach && head.mu[1] < torso.top()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize) -> Frame {
        Frame::from_rgb(3, w, h, vec![[100, 100, 100]; w * h]).unwrap()
    }

    #[test]
    fn empty_silhouette_errors() {
        let disc = TorsoDisc { center: (10.0, 10.0), radius: 4.0 };
        assert!(matches!(partition_regions(&Mask::new(20, 20), &disc, Rect::new(0, 0, 20, 20)), Err(Error::EmptySilhouette)));
    }

    #[test]
    fn leg_grid_boundaries() {
        let disc = TorsoDisc { center: (20.0, 20.0), radius: 5.0 };
        // disc bottom 25, bbox bottom row 45, mid 35
        let bb = 45;
        assert_eq!(classify_pixel(18, 30, &disc, bb), Some(PartLabel::Leg1));
        assert_eq!(classify_pixel(21, 34, &disc, bb), Some(PartLabel::Leg2));
        assert_eq!(classify_pixel(19, 35, &disc, bb), Some(PartLabel::Leg3));
        assert_eq!(classify_pixel(20, 45, &disc, bb), Some(PartLabel::Leg4));
        assert_eq!(classify_pixel(20, 46, &disc, bb), None);
        assert_eq!(classify_pixel(20, 14, &disc, bb), Some(PartLabel::Head));
        assert_eq!(classify_pixel(12, 20, &disc, bb), Some(PartLabel::ArmL));
        assert_eq!(classify_pixel(26, 10, &disc, bb), Some(PartLabel::ArmR));
        assert_eq!(classify_pixel(24, 16, &disc, bb), None);
        assert_eq!(classify_pixel(30, 30, &disc, bb), None);
    }

    #[test]
    fn central_only_gives_torso_alone() {
        let disc = TorsoDisc { center: (20.0, 20.0), radius: 6.0 };
        let sil = Mask::from_fn(40, 40, |x, y| (x as f64 - 20.0).hypot(y as f64 - 20.0) <= 6.0);
        let part = partition_regions(&sil, &disc, sil.bbox().unwrap()).unwrap();
        let model = build_part_model(&part, &gray(40, 40), None, DEFAULT_MIN_PART_AREA).unwrap();
        assert_eq!(model.blobs.keys().copied().collect::<Vec<_>>(), vec![PartLabel::Torso]);
        assert_eq!(model.frame_index, 3);
        assert_eq!(model.created, vec![PartLabel::Torso]);
        assert!(!detect_starfish(&model, &disc));
    }

    #[test]
    fn deletion_and_recreation_are_reported() {
        let disc = TorsoDisc { center: (20.0, 20.0), radius: 6.0 };
        let body = |arm: bool| {
            Mask::from_fn(60, 40, |x, y| {
                (x as f64 - 20.0).hypot(y as f64 - 20.0) <= 6.0 || (arm && (26..40).contains(&x) && (18..23).contains(&y))
            })
        };
        let f = gray(60, 40);
        let part = |m: &Mask| partition_regions(m, &disc, m.bbox().unwrap()).unwrap();
        let m0 = build_part_model(&part(&body(true)), &f, None, 15).unwrap();
        assert!(m0.present(PartLabel::ArmR));
        assert_eq!(m0.hands.len(), 1);
        assert_eq!(m0.hands[0].point.x, 39);
        let m1 = build_part_model(&part(&body(false)), &f, Some(&m0), 15).unwrap();
        assert_eq!(m1.deleted, vec![PartLabel::ArmR]);
        let m2 = build_part_model(&part(&body(true)), &f, Some(&m1), 15).unwrap();
        assert_eq!(m2.created, vec![PartLabel::ArmR]);
    }
}
