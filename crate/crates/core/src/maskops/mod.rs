//! Binary mask operations: morphology, labeling, contours and hulls.

mod components;
mod contours;
mod hull;
mod morph;

pub use components::{connected_components, ComponentStats, Connectivity, LabeledComponents};
pub use contours::{approximate_contour, extract_contours, fill_polygon, rasterize_polyline, Contour, ContourLevel};
pub use hull::{convex_hull, cross};
pub use morph::{close, dilate, erode, morph, MorphOp, StructuringElement};

use serde::{Deserialize, Serialize};

use crate::geometry::Mask;

/// Fraction of the frame area used as the default `min_area`.
pub const DEFAULT_MIN_AREA_FRACTION: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    pub se_size: usize,
    pub iterations: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            se_size: 3,
            iterations: 1,
        }
    }
}

pub fn default_min_area(width: usize, height: usize) -> usize {
    ((width * height) as f64 * DEFAULT_MIN_AREA_FRACTION).round() as usize
}

/// Dilate, erode, dilate, then fill every outer contour whose filled area is
/// at least `min_area`. Holes are filled and small specks dropped.
pub fn refine_mask(mask: &Mask, min_area: usize) -> Mask {
    refine_mask_with(mask, min_area, RefineParams::default())
}

pub fn refine_mask_with(mask: &Mask, min_area: usize, params: RefineParams) -> Mask {
    let se = StructuringElement::square(params.se_size);
    let it = params.iterations.max(1);
    let m = morph(mask, MorphOp::Dilate, se, it);
    let m = morph(&m, MorphOp::Erode, se, it);
    let m = morph(&m, MorphOp::Dilate, se, it);

    let mut out = Mask::new(mask.width, mask.height);
    for contour in extract_contours(&m) {
        if contour.level != ContourLevel::Outer {
            continue;
        }
        let poly = approximate_contour(&contour);
        let filled = fill_polygon(&poly, mask.width, mask.height);
        if filled.count() >= min_area.max(1) {
            out = out.or(&filled);
        }
    }
    out
}
