//! 16-bin joint (U, V) color histograms.

use crate::error::{Error, Result};
use crate::geometry::{Mask, Point, Rect};
use crate::imageio::Frame;

pub const HIST_BINS: usize = 16;

pub type Hist16 = [f64; HIST_BINS];

/// Tolerance on the bin sum for a histogram to count as normalized.
pub const NORM_TOL: f64 = 1e-9;

/// 4x4 quantization with edges at 0, 64, 128, 192, 256.
#[inline]
pub fn uv_bin(u: u8, v: u8) -> usize {
    (u as usize >> 6) * 4 + (v as usize >> 6)
}

fn normalize(counts: [u64; HIST_BINS]) -> Option<Hist16> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    Some(counts.map(|c| c as f64 / total as f64))
}

/// Histogram of the pixels of `rect` (clipped to the frame), optionally
/// restricted to `support`. `None` if no pixel contributes.
pub fn hist_in_rect(frame: &Frame, rect: Rect, support: Option<&Mask>) -> Option<Hist16> {
    let r = rect.clip(frame.width, frame.height);
    let mut counts = [0u64; HIST_BINS];
    for y in r.y..r.bottom() {
        let row = y as usize * frame.width;
        for x in r.x..r.right() {
            if let Some(s) = support {
                if !s.get(x as usize, y as usize) {
                    continue;
                }
            }
            let [_, u, v] = frame.yuv[row + x as usize];
            counts[uv_bin(u, v)] += 1;
        }
    }
    normalize(counts)
}

pub fn hist_of_points(frame: &Frame, points: &[Point]) -> Result<Hist16> {
    let mut counts = [0u64; HIST_BINS];
    for p in points {
        let [_, u, v] = frame.yuv_at(p.x as usize, p.y as usize);
        counts[uv_bin(u, v)] += 1;
    }
    normalize(counts).ok_or(Error::EmptyCluster)
}

pub fn check_normalized(h: &Hist16) -> Result<()> {
    let sum: f64 = h.iter().sum();
    if (sum - 1.0).abs() > NORM_TOL || h.iter().any(|&b| b < 0.0 || !b.is_finite()) {
        return Err(Error::UnnormalizedHistogram(sum));
    }
    Ok(())
}

/// Bhattacharyya coefficient, clamped to [0, 1].
pub fn bhattacharyya(h1: &Hist16, h2: &Hist16) -> f64 {
    h1.iter().zip(h2).map(|(a, b)| (a * b).sqrt()).sum::<f64>().clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_edges() {
        assert_eq!(uv_bin(0, 0), 0);
        assert_eq!(uv_bin(63, 64), 1);
        assert_eq!(uv_bin(64, 0), 4);
        assert_eq!(uv_bin(255, 255), 15);
    }

    #[test]
    fn normalization_check() {
        let mut h = [0.0; HIST_BINS];
        assert!(check_normalized(&h).is_err());
        h[3] = 1.0;
        assert!(check_normalized(&h).is_ok());
        assert_eq!(bhattacharyya(&h, &h), 1.0);
    }
}
