//! Planar geometry used by the detour computations.

/// A point in the Euclidean plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Point at parameter `z` along the segment from `a` to `b` (`z = 0` is `a`,
/// `z = 1` is `b`), by the internal section formula.
pub fn along_segment(a: Point, b: Point, z: f64) -> Point {
    Point::new(b.x * z + a.x * (1.0 - z), b.y * z + a.y * (1.0 - z))
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
///
/// Degenerate segments (`a == b`) reduce to the point distance.
pub fn dist_point_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    let t = t.clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_on_segment_has_zero_distance() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 0.0);
        assert_eq!(dist_point_to_segment(Point::new(4.0, 0.0), a, b), 0.0);
    }

    #[test]
    fn perpendicular_foot_inside_segment() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 0.0);
        assert_eq!(dist_point_to_segment(Point::new(5.0, 3.0), a, b), 3.0);
    }

    #[test]
    fn nearest_endpoint_when_foot_outside() {
        // Foot of the perpendicular from (13, 4) lies beyond b; the nearest
        // point is the endpoint (10, 0), a 3-4-5 triangle away.
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 0.0);
        assert_eq!(dist_point_to_segment(Point::new(13.0, 4.0), a, b), 5.0);
    }

    #[test]
    fn degenerate_segment() {
        let a = Point::new(2.0, 2.0);
        assert_eq!(dist_point_to_segment(Point::new(5.0, 6.0), a, a), 5.0);
    }

    #[test]
    fn section_formula_endpoints_and_midpoint() {
        let a = Point::new(1.0, 2.0);
        let b = Point::new(5.0, 10.0);
        assert_eq!(along_segment(a, b, 0.0), a);
        assert_eq!(along_segment(a, b, 1.0), b);
        assert_eq!(along_segment(a, b, 0.5), Point::new(3.0, 6.0));
    }
}
