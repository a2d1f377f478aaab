//! Planar geometry primitives shared by the meshing and clustering code.

use serde::{Deserialize, Serialize};

/// A point in the 2D specimen plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Twice the signed area of triangle (a, b, c); positive for counterclockwise winding.
pub fn orient2d(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Signed area of triangle (a, b, c).
pub fn triangle_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * orient2d(a, b, c)
}

/// Positive when `p` lies strictly inside the circumcircle of the
/// counterclockwise triangle (a, b, c).
pub fn in_circle(a: Point2, b: Point2, c: Point2, p: Point2) -> f64 {
    let ax = a.x - p.x;
    let ay = a.y - p.y;
    let bx = b.x - p.x;
    let by = b.y - p.y;
    let cx = c.x - p.x;
    let cy = c.y - p.y;
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

/// Shoelace area of a simple polygon; positive for counterclockwise vertex order.
pub fn polygon_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut twice_area = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice_area += a.x * b.y - a.y * b.x;
    }
    0.5 * twice_area
}

/// Even-odd crossing test; points exactly on the boundary may land on either side.
pub fn point_in_polygon(p: Point2, vertices: &[Point2]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let vi = vertices[i];
        let vj = vertices[j];
        if (vi.y > p.y) != (vj.y > p.y) {
            let x_cross = vj.x + (p.y - vj.y) / (vi.y - vj.y) * (vi.x - vj.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the closed segment (a, b).
pub fn dist_point_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let len_sq = abx * abx + aby * aby;
    if len_sq == 0.0 {
        return p.dist(&a);
    }
    let t = (((p.x - a.x) * abx + (p.y - a.y) * aby) / len_sq).clamp(0.0, 1.0);
    let proj = Point2::new(a.x + t * abx, a.y + t * aby);
    p.dist(&proj)
}

/// Vertices of the regular polygon inscribed in the circle (center, radius),
/// starting at angle zero and winding counterclockwise.
pub fn inscribed_polygon(center: Point2, radius: f64, sides: usize) -> Vec<Point2> {
    (0..sides)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
            Point2::new(center.x + radius * theta.cos(), center.y + radius * theta.sin())
        })
        .collect()
}
