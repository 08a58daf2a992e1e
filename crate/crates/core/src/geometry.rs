//! Shared pixel-space primitives: integer points, rectangles and binary masks.

use serde::{Deserialize, Serialize};

/// Integer pixel coordinate. `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned pixel rectangle; covers columns `x..x+width` and rows `y..y+height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: i32,
    pub y: i32,
    pub width: i32,
    pub height: i32,
}

impl Rect {
    pub const fn new(x: i32, y: i32, width: i32, height: i32) -> Self {
        Self { x, y, width, height }
    }

    /// Rectangle of the given size whose pixel center is nearest to `(cx, cy)`.
    pub fn centered_at(cx: f64, cy: f64, width: i32, height: i32) -> Self {
        let x = (cx - (width - 1) as f64 / 2.0).round() as i32;
        let y = (cy - (height - 1) as f64 / 2.0).round() as i32;
        Self { x, y, width, height }
    }

    pub fn right(&self) -> i32 {
        self.x + self.width
    }

    pub fn bottom(&self) -> i32 {
        self.y + self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width <= 0 || self.height <= 0
    }

    pub fn area(&self) -> i64 {
        if self.is_empty() {
            0
        } else {
            self.width as i64 * self.height as i64
        }
    }

    /// Center of the covered pixel block (pixel centers sit on integer coordinates).
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + (self.width - 1) as f64 / 2.0,
            self.y as f64 + (self.height - 1) as f64 / 2.0,
        )
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn contains_f(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64 - 0.5
            && x <= (self.right() - 1) as f64 + 0.5
            && y >= self.y as f64 - 0.5
            && y <= (self.bottom() - 1) as f64 + 0.5
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        Rect::new(x0, y0, (x1 - x0).max(0), (y1 - y0).max(0))
    }

    /// Intersection with the `width × height` frame.
    pub fn clip(&self, width: usize, height: usize) -> Rect {
        self.intersect(&Rect::new(0, 0, width as i32, height as i32))
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersect(other).area();
        let union = self.area() + other.area() - inter;
        if union <= 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn translate(&self, dx: i32, dy: i32) -> Rect {
        Rect::new(self.x + dx, self.y + dy, self.width, self.height)
    }

    /// Same center, each side scaled by `factor` (at least 1 px).
    pub fn scaled(&self, factor: f64) -> Rect {
        let (cx, cy) = self.center();
        let w = ((self.width as f64 * factor).round() as i32).max(1);
        let h = ((self.height as f64 * factor).round() as i32).max(1);
        Rect::centered_at(cx, cy, w, h)
    }

    /// Euclidean distance from a point to the nearest point of the rectangle (0 inside).
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let x0 = self.x as f64;
        let y0 = self.y as f64;
        let x1 = (self.right() - 1) as f64;
        let y1 = (self.bottom() - 1) as f64;
        let dx = (x0 - x).max(0.0).max(x - x1);
        let dy = (y0 - y).max(0.0).max(y - y1);
        dx.hypot(dy)
    }
}

/// Binary raster. Also used as the foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

pub type ForegroundMask = Mask;

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn from_points(width: usize, height: usize, points: impl IntoIterator<Item = Point>) -> Self {
        let mut mask = Self::new(width, height);
        for p in points {
            mask.set_checked(p.x, p.y, true);
        }
        mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-frame coordinates read as background.
    #[inline]
    pub fn get_checked(&self, x: i32, y: i32) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn set_checked(&mut self, x: i32, y: i32, value: bool) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.bits[y as usize * self.width + x as usize] = value;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Set pixels in raster order.
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Point::new((i % w) as i32, (i / w) as i32))
    }

    pub fn and(&self, other: &Mask) -> Mask {
        debug_assert!(self.same_dims(other));
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        debug_assert!(self.same_dims(other));
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Bounding box of the set pixels, `None` when empty.
    pub fn bbox(&self) -> Option<Rect> {
        let mut x0 = usize::MAX;
        let mut y0 = usize::MAX;
        let mut x1 = 0;
        let mut y1 = 0;
        let mut any = false;
        for y in 0..self.height {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            for (x, &b) in row.iter().enumerate() {
                if b {
                    any = true;
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| Rect::new(x0 as i32, y0 as i32, (x1 - x0 + 1) as i32, (y1 - y0 + 1) as i32))
    }

    /// Pixel-count intersection over union; two empty masks score 1.
    pub fn iou(&self, other: &Mask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_iou_and_distance() {
        let a = Rect::new(0, 0, 10, 10);
        let b = Rect::new(5, 0, 10, 10);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.distance_to(3.0, 3.0), 0.0);
        assert!((a.distance_to(12.0, 9.0) - 3.0).abs() < 1e-12);
        assert!((a.distance_to(12.0, 13.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn centered_rect_round_trips_center() {
        let r = Rect::centered_at(100.0, 50.0, 41, 20);
        assert_eq!(r.center(), (100.0, 50.5));
        assert_eq!(Rect::centered_at(r.center().0, r.center().1, 41, 20), r);
    }

    #[test]
    fn mask_bbox() {
        let m = Mask::from_points(8, 8, [Point::new(2, 3), Point::new(5, 1)]);
        assert_eq!(m.bbox(), Some(Rect::new(2, 1, 4, 3)));
        assert_eq!(Mask::new(4, 4).bbox(), None);
    }
}
