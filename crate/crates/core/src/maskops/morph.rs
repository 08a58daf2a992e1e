//! Binary dilation and erosion with rectangular structuring elements.
//!
//! Pixels outside the frame are background for both operations.

use crate::geometry::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Dilate,
    Erode,
}

/// Rectangular structuring element anchored at its center pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    pub width: usize,
    pub height: usize,
}

impl StructuringElement {
    pub const fn square(size: usize) -> Self {
        Self {
            width: size,
            height: size,
        }
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self::square(3)
    }
}

/// Applies `op` with `se` `iterations` times.
pub fn morph(mask: &Mask, op: MorphOp, se: StructuringElement, iterations: usize) -> Mask {
    let mut out = mask.clone();
    for _ in 0..iterations {
        out = morph_once(&out, op, se);
    }
    out
}

pub fn dilate(mask: &Mask, se: StructuringElement) -> Mask {
    morph_once(mask, MorphOp::Dilate, se)
}

pub fn erode(mask: &Mask, se: StructuringElement) -> Mask {
    morph_once(mask, MorphOp::Erode, se)
}

/// Dilation followed by erosion with the same element.
pub fn close(mask: &Mask, se: StructuringElement) -> Mask {
    erode(&dilate(mask, se), se)
}

fn morph_once(mask: &Mask, op: MorphOp, se: StructuringElement) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let se_w = se.width.max(1);
    let se_h = se.height.max(1);
    // Erosion tests p + o for o in [-anchor, size-1-anchor]; dilation uses the
    // reflected element.
    let ax = (se_w - 1) / 2;
    let ay = (se_h - 1) / 2;
    let (lo_x, hi_x, lo_y, hi_y) = match op {
        MorphOp::Erode => (ax, se_w - 1 - ax, ay, se_h - 1 - ay),
        MorphOp::Dilate => (se_w - 1 - ax, ax, se_h - 1 - ay, ay),
    };
    let horizontal = window_pass(&mask.bits, w, h, lo_x, hi_x, op, true);
    let bits = window_pass(&horizontal, w, h, lo_y, hi_y, op, false);
    Mask { width: w, height: h, bits }
}

/// One separable pass: each output pixel looks at the window
/// `[i - lo, i + hi]` along rows (`horizontal`) or columns.
fn window_pass(src: &[bool], w: usize, h: usize, lo: usize, hi: usize, op: MorphOp, horizontal: bool) -> Vec<bool> {
    let mut dst = vec![false; w * h];
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };
    let full = lo + hi + 1;
    let idx = |line: usize, i: usize| if horizontal { line * w + i } else { i * w + line };
    for line in 0..lines {
        // running count of set pixels in [i - lo, i + hi] ∩ [0, len)
        let mut count = 0usize;
        for k in 0..hi.min(len) {
            count += src[idx(line, k)] as usize;
        }
        for i in 0..len {
            let enter = i + hi;
            if enter < len {
                count += src[idx(line, enter)] as usize;
            }
            if i > lo {
                count -= src[idx(line, i - lo - 1)] as usize;
            }
            dst[idx(line, i)] = match op {
                MorphOp::Dilate => count > 0,
                MorphOp::Erode => count == full,
            };
        }
    }
    dst
}
