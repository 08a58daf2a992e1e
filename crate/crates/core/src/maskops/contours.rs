//! Border following with a two-level (outer/hole) hierarchy, chain
//! compression and polygon filling.

use serde::{Deserialize, Serialize};

use crate::geometry::{Mask, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourLevel {
    Outer,
    Hole,
}

/// Closed 8-connected pixel chain. `parent` indexes into the list returned
/// by [`extract_contours`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<Point>,
    pub level: ContourLevel,
    pub parent: Option<usize>,
}

// Neighbor offsets indexed counterclockwise on screen starting east.
const DIRS: [(i32, i32); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

fn dir_of(dx: i32, dy: i32) -> usize {
    DIRS.iter().position(|&d| d == (dx, dy)).expect("neighbors are 8-adjacent")
}

struct Border {
    hole: bool,
    parent: usize,
    out_index: Option<usize>,
}

/// Traces every border of the foreground. Outer borders are top level
/// (including islands inside holes); each hole border points at the outer
/// border of the component that encloses it.
pub fn extract_contours(mask: &Mask) -> Vec<Contour> {
    let (w, h) = (mask.width as i32, mask.height as i32);
    let pw = w + 2;
    let ph = h + 2;
    let mut f = vec![0i32; (pw * ph) as usize];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x as usize, y as usize) {
                f[((y + 1) * pw + x + 1) as usize] = 1;
            }
        }
    }
    let at = |x: i32, y: i32| (y * pw + x) as usize;

    // index 0 unused, 1 is the frame
    let mut borders: Vec<Border> = vec![
        Border { hole: true, parent: 0, out_index: None },
        Border { hole: true, parent: 0, out_index: None },
    ];
    let mut out: Vec<Contour> = Vec::new();
    let mut nbd = 1i32;

    for y in 1..ph - 1 {
        let mut lnbd = 1i32;
        for x in 1..pw - 1 {
            let fij = f[at(x, y)];
            let start = if fij == 1 && f[at(x - 1, y)] == 0 {
                Some((false, (x - 1, y)))
            } else if fij >= 1 && f[at(x + 1, y)] == 0 {
                if fij > 1 {
                    lnbd = fij;
                }
                Some((true, (x + 1, y)))
            } else {
                None
            };

            if let Some((hole, from)) = start {
                nbd += 1;
                let prev = &borders[lnbd.unsigned_abs() as usize];
                let parent = match (hole, prev.hole) {
                    (false, false) | (true, true) => prev.parent,
                    _ => lnbd.unsigned_abs() as usize,
                };
                let points = follow(&mut f, pw, (x, y), from, nbd);
                let level = if hole { ContourLevel::Hole } else { ContourLevel::Outer };
                let parent_out = if hole { borders[parent].out_index } else { None };
                out.push(Contour {
                    points: points.iter().map(|&(px, py)| Point::new(px - 1, py - 1)).collect(),
                    level,
                    parent: parent_out,
                });
                borders.push(Border { hole, parent, out_index: Some(out.len() - 1) });
            }

            let v = f[at(x, y)];
            if v != 0 && v != 1 {
                lnbd = v;
            }
        }
    }
    out
}

fn follow(f: &mut [i32], pw: i32, start: (i32, i32), from: (i32, i32), nbd: i32) -> Vec<(i32, i32)> {
    let at = |p: (i32, i32)| (p.1 * pw + p.0) as usize;
    let nb = |p: (i32, i32), d: usize| (p.0 + DIRS[d].0, p.1 + DIRS[d].1);

    // clockwise search from `from` for the first foreground neighbor
    let d0 = dir_of(from.0 - start.0, from.1 - start.1);
    let first = (0..8).map(|k| (d0 + 8 - k) % 8).map(|d| nb(start, d)).find(|&p| f[at(p)] != 0);
    let Some(p1) = first else {
        f[at(start)] = -nbd;
        return vec![start];
    };

    let mut chain = Vec::new();
    let mut p2 = p1;
    let mut p3 = start;
    loop {
        chain.push(p3);
        let d2 = dir_of(p2.0 - p3.0, p2.1 - p3.1);
        let mut east_zero = false;
        let mut p4 = p3;
        for k in 1..=8 {
            let d = (d2 + k) % 8;
            let q = nb(p3, d);
            if f[at(q)] != 0 {
                p4 = q;
                break;
            }
            if d == 0 {
                east_zero = true;
            }
        }
        if east_zero {
            f[at(p3)] = -nbd;
        } else if f[at(p3)] == 1 {
            f[at(p3)] = nbd;
        }
        if p4 == start && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    chain
}

/// Keeps only the points where the chain changes direction. A one-point
/// chain is returned as is.
pub fn approximate_contour(contour: &Contour) -> Vec<Point> {
    let pts = &contour.points;
    let n = pts.len();
    if n <= 2 {
        return pts.clone();
    }
    let step = |a: Point, b: Point| (b.x - a.x, b.y - a.y);
    let mut keep: Vec<Point> = (0..n)
        .filter(|&i| step(pts[(i + n - 1) % n], pts[i]) != step(pts[i], pts[(i + 1) % n]))
        .map(|i| pts[i])
        .collect();
    if keep.is_empty() {
        // cannot happen for a closed chain, kept for safety
        keep.push(pts[0]);
    }
    keep
}

/// Walks a closed polyline whose edges run along the 8 chain directions and
/// returns every pixel visited, each edge's start included once.
pub fn rasterize_polyline(vertices: &[Point]) -> Vec<Point> {
    let n = vertices.len();
    if n <= 1 {
        return vertices.to_vec();
    }
    let mut out = Vec::new();
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let (sx, sy) = ((b.x - a.x).signum(), (b.y - a.y).signum());
        let mut p = a;
        while p != b {
            out.push(p);
            p = Point::new(p.x + sx, p.y + sy);
        }
    }
    out
}

/// Fills a closed polygon by the nonzero winding rule, boundary included.
pub fn fill_polygon(vertices: &[Point], width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    for p in rasterize_polyline(vertices) {
        mask.set_checked(p.x, p.y, true);
    }
    let n = vertices.len();
    if n < 3 {
        return mask;
    }
    let mut crossings: Vec<(f64, i32)> = Vec::new();
    for y in 0..height as i32 {
        crossings.clear();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            if a.y == b.y {
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a.y, b.y) } else { (b.y, a.y) };
            if y < lo || y >= hi {
                continue;
            }
            let cx = a.x as f64 + (y - a.y) as f64 * (b.x - a.x) as f64 / (b.y - a.y) as f64;
            crossings.push((cx, (b.y - a.y).signum()));
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut winding = 0;
        let mut k = 0;
        for x in 0..width as i32 {
            while k < crossings.len() && crossings[k].0 < x as f64 {
                winding += crossings[k].1;
                k += 1;
            }
            if winding != 0 {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    fn rect_mask(w: usize, h: usize, r: Rect) -> Mask {
        Mask::from_fn(w, h, |x, y| r.contains(x as i32, y as i32))
    }

    fn is_closed_chain(c: &Contour) -> bool {
        let n = c.points.len();
        (0..n).all(|i| {
            let a = c.points[i];
            let b = c.points[(i + 1) % n];
            (a.x - b.x).abs() <= 1 && (a.y - b.y).abs() <= 1
        })
    }

    #[test]
    fn filled_square_has_one_outer_contour() {
        let m = rect_mask(20, 20, Rect::new(5, 5, 10, 10));
        let cs = extract_contours(&m);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].level, ContourLevel::Outer);
        assert_eq!(cs[0].parent, None);
        assert_eq!(cs[0].points.len(), 36);
        assert_eq!(cs[0].points[0], Point::new(5, 5));
        assert!(is_closed_chain(&cs[0]));
    }

    #[test]
    fn ring_has_outer_and_hole() {
        let outer = rect_mask(20, 20, Rect::new(2, 2, 14, 14));
        let inner = rect_mask(20, 20, Rect::new(6, 6, 6, 6));
        let ring = Mask::from_fn(20, 20, |x, y| outer.get(x, y) && !inner.get(x, y));
        let cs = extract_contours(&ring);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].level, ContourLevel::Outer);
        assert_eq!(cs[1].level, ContourLevel::Hole);
        assert_eq!(cs[1].parent, Some(0));
        assert!(cs.iter().all(is_closed_chain));
    }

    #[test]
    fn island_inside_hole_is_top_level() {
        let outer = rect_mask(30, 30, Rect::new(2, 2, 24, 24));
        let hole = rect_mask(30, 30, Rect::new(6, 6, 16, 16));
        let island = rect_mask(30, 30, Rect::new(11, 11, 5, 5));
        let m = Mask::from_fn(30, 30, |x, y| (outer.get(x, y) && !hole.get(x, y)) || island.get(x, y));
        let cs = extract_contours(&m);
        assert_eq!(cs.len(), 3);
        let outers: Vec<_> = cs.iter().filter(|c| c.level == ContourLevel::Outer).collect();
        assert_eq!(outers.len(), 2);
        assert!(outers.iter().all(|c| c.parent.is_none()));
        let hole_c = cs.iter().find(|c| c.level == ContourLevel::Hole).unwrap();
        assert_eq!(cs[hole_c.parent.unwrap()].points[0], Point::new(2, 2));
    }

    #[test]
    fn single_pixel_and_thin_line() {
        let m = Mask::from_points(5, 5, [Point::new(2, 2)]);
        let cs = extract_contours(&m);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].points, vec![Point::new(2, 2)]);
        let line = Mask::from_fn(8, 3, |x, y| y == 1 && (1..6).contains(&x));
        let cs = extract_contours(&line);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].points.len(), 8);
        assert_eq!(approximate_contour(&cs[0]), vec![Point::new(1, 1), Point::new(5, 1)]);
    }

    #[test]
    fn rectangle_compresses_to_four_points() {
        let m = rect_mask(20, 20, Rect::new(3, 4, 8, 6));
        let cs = extract_contours(&m);
        let poly = approximate_contour(&cs[0]);
        assert_eq!(poly.len(), 4);
        let mut sorted = poly.clone();
        sorted.sort();
        assert_eq!(sorted, vec![Point::new(3, 4), Point::new(3, 9), Point::new(10, 4), Point::new(10, 9)]);
    }

    #[test]
    fn staircase_diagonal_compresses_to_two_points() {
        let chain = Contour {
            points: vec![Point::new(0, 0), Point::new(1, 1), Point::new(2, 2), Point::new(3, 3), Point::new(2, 2), Point::new(1, 1)],
            level: ContourLevel::Outer,
            parent: None,
        };
        assert_eq!(approximate_contour(&chain), vec![Point::new(0, 0), Point::new(3, 3)]);
    }

    #[test]
    fn polygon_fill_covers_filled_triangle() {
        let tri = Mask::from_fn(30, 30, |x, y| y >= 3 && y <= 20 && x >= 3 && x <= y);
        let cs = extract_contours(&tri);
        let poly = approximate_contour(&cs[0]);
        assert_eq!(fill_polygon(&poly, 30, 30), tri);
    }
}
