//! Two-pass connected-component labeling with union-find.

use serde::{Deserialize, Serialize};

use crate::geometry::{Mask, Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub label: u32,
    pub area: usize,
    pub bbox: Rect,
    pub centroid: (f64, f64),
}

/// Label raster (0 = background, components numbered 1..=k in raster order
/// of their first pixel) plus per-component statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledComponents {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub stats: Vec<ComponentStats>,
}

impl LabeledComponents {
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn get(&self, label: u32) -> Option<&ComponentStats> {
        label.checked_sub(1).and_then(|i| self.stats.get(i as usize))
    }

    pub fn mask_of(&self, label: u32) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    pub fn pixels_of(&self, label: u32) -> Vec<Point> {
        let w = self.width;
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| Point::new((i % w) as i32, (i / w) as i32))
            .collect()
    }

    /// Largest component; the lowest label wins ties.
    pub fn largest(&self) -> Option<&ComponentStats> {
        self.stats.iter().fold(None, |best: Option<&ComponentStats>, s| match best {
            Some(b) if b.area >= s.area => Some(b),
            _ => Some(s),
        })
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let ra = find(parent, a);
    let rb = find(parent, b);
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> LabeledComponents {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            let mut look = |nx: i64, ny: i64| {
                if nx >= 0 && ny >= 0 && (nx as usize) < w {
                    let l = labels[ny as usize * w + nx as usize];
                    if l != 0 {
                        neighbors[n] = l;
                        n += 1;
                    }
                }
            };
            let (xi, yi) = (x as i64, y as i64);
            look(xi - 1, yi);
            look(xi, yi - 1);
            if connectivity == Connectivity::Eight {
                look(xi - 1, yi - 1);
                look(xi + 1, yi - 1);
            }
            let label = if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let min = neighbors[..n].iter().copied().min().unwrap();
                for &l in &neighbors[..n] {
                    union(&mut parent, min, l);
                }
                min
            };
            labels[y * w + x] = label;
        }
    }

    // resolve to contiguous labels in raster order of first appearance
    let mut remap = vec![0u32; parent.len()];
    let mut next = 0u32;
    let mut sums: Vec<(usize, i64, i64, i32, i32, i32, i32)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l);
            if remap[root as usize] == 0 {
                next += 1;
                remap[root as usize] = next;
                sums.push((0, 0, 0, i32::MAX, i32::MAX, i32::MIN, i32::MIN));
            }
            let final_label = remap[root as usize];
            labels[y * w + x] = final_label;
            let s = &mut sums[final_label as usize - 1];
            let (xi, yi) = (x as i32, y as i32);
            s.0 += 1;
            s.1 += xi as i64;
            s.2 += yi as i64;
            s.3 = s.3.min(xi);
            s.4 = s.4.min(yi);
            s.5 = s.5.max(xi);
            s.6 = s.6.max(yi);
        }
    }
    let stats = sums
        .iter()
        .enumerate()
        .map(|(i, &(area, sx, sy, x0, y0, x1, y1))| ComponentStats {
            label: i as u32 + 1,
            area,
            bbox: Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            centroid: (sx as f64 / area as f64, sy as f64 / area as f64),
        })
        .collect();
    LabeledComponents {
        width: w,
        height: h,
        labels,
        stats,
    }
}
