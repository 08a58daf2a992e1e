//! Pyramidal Lucas-Kanade point tracking on luma.

use serde::{Deserialize, Serialize};

use crate::geometry::Rect;
use crate::imageio::Frame;

/// Single-channel float image in gray levels (0..255).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn from_frame(frame: &Frame) -> Self {
        Self { width: frame.width, height: frame.height, data: frame.yuv.iter().map(|p| p[0] as f32).collect() }
    }

    #[inline]
    pub fn at(&self, x: i64, y: i64) -> f32 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample with border replication.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as i64, y0 as i64);
        let a = self.at(xi, yi) as f64;
        let b = self.at(xi + 1, yi) as f64;
        let c = self.at(xi, yi + 1) as f64;
        let d = self.at(xi + 1, yi + 1) as f64;
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    /// Binomial (1 4 6 4 1) smoothing followed by 2x decimation.
    pub fn half(&self) -> Image {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let w = self.width.div_ceil(2).max(1);
        let h = self.height.div_ceil(2).max(1);
        // horizontal pass at decimated columns, all rows
        let mut tmp = Vec::with_capacity(w * self.height);
        for y in 0..self.height as i64 {
            for x in 0..w as i64 {
                tmp.push((0..5).map(|k| K[k] * self.at(2 * x + k as i64 - 2, y)).sum::<f32>());
            }
        }
        let tmp = Image { width: w, height: self.height, data: tmp };
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                data.push((0..5).map(|k| K[k] * tmp.at(x, 2 * y + k as i64 - 2)).sum::<f32>());
            }
        }
        Image { width: w, height: h, data }
    }

    /// Central-difference gradients.
    fn gradients(&self) -> (Image, Image) {
        let (w, h) = (self.width, self.height);
        let mut gx = Vec::with_capacity(w * h);
        let mut gy = Vec::with_capacity(w * h);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                gx.push((self.at(x + 1, y) - self.at(x - 1, y)) / 2.0);
                gy.push((self.at(x, y + 1) - self.at(x, y - 1)) / 2.0);
            }
        }
        (Image { width: w, height: h, data: gx }, Image { width: w, height: h, data: gy })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub window: usize,
    pub levels: usize,
    pub iters: usize,
    /// Threshold on the smallest structure-tensor eigenvalue divided by the
    /// window pixel count, gradients in gray levels per pixel.
    pub min_eig: f64,
    /// Update size below which iterations stop, px.
    pub eps: f64,
    /// RMS residual in gray levels above which a point is dropped.
    pub max_residual: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { window: 15, levels: 3, iters: 20, min_eig: 1e-3, eps: 0.01, max_residual: 20.0 }
    }
}

struct Level {
    img: Image,
    gx: Image,
    gy: Image,
}

fn pyramid(img: &Image, levels: usize) -> Vec<Image> {
    let mut out = vec![img.clone()];
    for _ in 1..levels.max(1) {
        let next = out.last().unwrap().half();
        out.push(next);
    }
    out
}

/// Smallest eigenvalue of a symmetric 2x2 matrix.
fn min_eigen(gxx: f64, gxy: f64, gyy: f64) -> f64 {
    0.5 * (gxx + gyy - ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt())
}

/// Tracks `points` from `prev` to `next`. Returns the new positions and
/// whether each point is still alive.
pub fn lk_flow(prev: &Image, next: &Image, points: &[(f64, f64)], params: &FlowParams) -> Vec<((f64, f64), bool)> {
    let levels = params.levels.max(1);
    let prev_pyr: Vec<Level> = pyramid(prev, levels)
        .into_iter()
        .map(|img| {
            let (gx, gy) = img.gradients();
            Level { img, gx, gy }
        })
        .collect();
    let next_pyr = pyramid(next, levels);
    points.iter().map(|&p| track_point(&prev_pyr, &next_pyr, p, params)).collect()
}

fn track_point(prev: &[Level], next: &[Image], p: (f64, f64), params: &FlowParams) -> ((f64, f64), bool) {
    let half = (params.window / 2) as i64;
    let n_win = ((2 * half + 1) * (2 * half + 1)) as f64;
    let (w0, h0) = (prev[0].img.width as f64, prev[0].img.height as f64);
    let margin = half as f64;
    if p.0 < margin || p.1 < margin || p.0 > w0 - 1.0 - margin || p.1 > h0 - 1.0 - margin {
        return (p, false);
    }

    let mut g = (0.0f64, 0.0f64);
    let mut residual = 0.0;
    for lvl in (0..prev.len()).rev() {
        let scale = (1u32 << lvl) as f64;
        let (px, py) = (p.0 / scale, p.1 / scale);
        let Level { img, gx, gy } = &prev[lvl];
        let j = &next[lvl];

        let mut patch = Vec::with_capacity(n_win as usize);
        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (px + dx as f64, py + dy as f64);
                let ix = gx.sample(x, y);
                let iy = gy.sample(x, y);
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
                patch.push((img.sample(x, y), ix, iy));
            }
        }
        let lam = min_eigen(gxx, gxy, gyy) / n_win;
        if lvl == 0 && lam < params.min_eig {
            return (p, false);
        }
        let det = gxx * gyy - gxy * gxy;
        let mut v = (0.0f64, 0.0f64);
        if det.abs() > 1e-12 {
            for _ in 0..params.iters {
                let (mut bx, mut by) = (0.0, 0.0);
                let mut k = 0;
                for dy in -half..=half {
                    for dx in -half..=half {
                        let (i, ix, iy) = patch[k];
                        k += 1;
                        let jv = j.sample(px + g.0 + v.0 + dx as f64, py + g.1 + v.1 + dy as f64);
                        let di = i - jv;
                        bx += di * ix;
                        by += di * iy;
                    }
                }
                let ex = (gyy * bx - gxy * by) / det;
                let ey = (gxx * by - gxy * bx) / det;
                v.0 += ex;
                v.1 += ey;
                if ex.hypot(ey) < params.eps {
                    break;
                }
            }
        }
        if lvl == 0 {
            g = (g.0 + v.0, g.1 + v.1);
            let mut ss = 0.0;
            let mut k = 0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let d = patch[k].0 - j.sample(px + g.0 + dx as f64, py + g.1 + dy as f64);
                    ss += d * d;
                    k += 1;
                }
            }
            residual = (ss / n_win).sqrt();
        } else {
            g = (2.0 * (g.0 + v.0), 2.0 * (g.1 + v.1));
        }
    }
    let q = (p.0 + g.0, p.1 + g.1);
    let inside = q.0 >= 0.0 && q.1 >= 0.0 && q.0 <= w0 - 1.0 && q.1 <= h0 - 1.0;
    let alive = inside && residual.is_finite() && residual <= params.max_residual && g.0.is_finite() && g.1.is_finite();
    (if alive { q } else { p }, alive)
}

/// Up to `max_points` pixels in `rect` with the strongest smallest
/// structure-tensor eigenvalue over a `window`-sized neighborhood, at least
/// `min_dist` apart. Candidates below `min_eig` are skipped.
pub fn good_features(img: &Image, rect: Rect, max_points: usize, window: usize, min_eig: f64, min_dist: f64) -> Vec<(f64, f64)> {
    let r = rect.clip(img.width, img.height);
    let (gx, gy) = img.gradients();
    let half = (window / 2) as i64;
    let n_win = ((2 * half + 1) * (2 * half + 1)) as f64;
    let mut cands = Vec::new();
    for y in r.y..r.bottom() {
        for x in r.x..r.right() {
            let (xi, yi) = (x as i64, y as i64);
            if xi < half || yi < half || xi + half >= img.width as i64 || yi + half >= img.height as i64 {
                continue;
            }
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -half..=half {
                for dx in -half..=half {
                    let ix = gx.at(xi + dx, yi + dy) as f64;
                    let iy = gy.at(xi + dx, yi + dy) as f64;
                    a += ix * ix;
                    b += ix * iy;
                    c += iy * iy;
                }
            }
            let lam = min_eigen(a, b, c) / n_win;
            if lam >= min_eig {
                cands.push((lam, x, y));
            }
        }
    }
    cands.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.2.cmp(&q.2)).then(p.1.cmp(&q.1)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (_, x, y) in cands {
        let (fx, fy) = (x as f64, y as f64);
        if out.iter().all(|&(ox, oy)| (ox - fx).hypot(oy - fy) >= min_dist) {
            out.push((fx, fy));
            if out.len() == max_points {
                break;
            }
        }
    }
    out
}
