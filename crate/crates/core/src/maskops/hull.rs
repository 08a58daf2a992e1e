//! Graham scan.

use crate::error::{Error, Result};
use crate::geometry::Point;

/// z component of (b - a) x (c - a).
pub fn cross(a: Point, b: Point, c: Point) -> i64 {
    let (abx, aby) = ((b.x - a.x) as i64, (b.y - a.y) as i64);
    let (acx, acy) = ((c.x - a.x) as i64, (c.y - a.y) as i64);
    abx * acy - aby * acx
}

/// Convex hull with collinear boundary points dropped. Vertices run in
/// positive-cross order (counterclockwise with y pointing up, so clockwise
/// as displayed on screen) starting at the point with the smallest y, then
/// smallest x. Collinear input yields its two extreme points.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    let pivot = *pts.iter().min_by_key(|p| (p.y, p.x)).unwrap();
    pts.retain(|&p| p != pivot);
    if pts.is_empty() {
        return Ok(vec![pivot]);
    }
    let dist2 = |p: &Point| {
        let (dx, dy) = ((p.x - pivot.x) as i64, (p.y - pivot.y) as i64);
        dx * dx + dy * dy
    };
    // every point lies in the half-plane y >= pivot.y, so angle order is a
    // total order given by the cross product
    pts.sort_by(|a, b| cross(pivot, *b, *a).cmp(&0).then_with(|| dist2(a).cmp(&dist2(b))));

    let mut stack: Vec<Point> = vec![pivot];
    for p in pts {
        while stack.len() >= 2 && cross(stack[stack.len() - 2], stack[stack.len() - 1], p) <= 0 {
            stack.pop();
        }
        stack.push(p);
    }
    Ok(stack)
}
