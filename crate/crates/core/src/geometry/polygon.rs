//! Planar convex polygons: hull, rectangle clipping and area.

pub type Point2 = [f64; 2];

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub const SCREEN: Rect = Rect {
        min: [-1.0, -1.0],
        max: [1.0, 1.0],
    };

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counterclockwise convex hull (Andrew's monotone chain) without
/// collinear vertices. Fewer than three non-collinear points give an empty
/// polygon.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return Vec::new();
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Vec::new();
    }
    hull
}

/// Sutherland-Hodgman clipping of a polygon against a rectangle.
pub fn clip_convex(polygon: &[Point2], rect: &Rect) -> Vec<Point2> {
    // each edge: (axis, bound, keep-if-greater)
    let edges = [
        (0, rect.min[0], true),
        (0, rect.max[0], false),
        (1, rect.min[1], true),
        (1, rect.max[1], false),
    ];
    let mut out: Vec<Point2> = polygon.to_vec();
    for (axis, bound, keep_greater) in edges {
        if out.is_empty() {
            break;
        }
        let inside = |p: &Point2| {
            if keep_greater {
                p[axis] >= bound
            } else {
                p[axis] <= bound
            }
        };
        let input = std::mem::take(&mut out);
        for (i, &cur) in input.iter().enumerate() {
            let prev = input[(i + input.len() - 1) % input.len()];
            let (cur_in, prev_in) = (inside(&cur), inside(&prev));
            if cur_in != prev_in {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut p = [
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                ];
                p[axis] = bound;
                out.push(p);
            }
            if cur_in {
                out.push(cur);
            }
        }
    }
    out
}

/// Shoelace area; positive for counterclockwise polygons.
pub fn polygon_area(polygon: &[Point2]) -> f64 {
    if polygon.len() < 3 {
        return 0.0;
    }
    let n = polygon.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (polygon[i], polygon[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square_hull() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!((polygon_area(&h) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(convex_hull(&[[0.0, 0.0], [1.0, 1.0]]).is_empty());
        assert!(convex_hull(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).is_empty());
        assert_eq!(polygon_area(&[[0.0, 0.0], [1.0, 1.0]]), 0.0);
    }

    #[test]
    fn triangle_inside_is_unchanged() {
        let tri = vec![[-0.5, -0.5], [0.5, -0.5], [0.0, 0.5]];
        let clipped = clip_convex(&tri, &Rect::SCREEN);
        assert_eq!(polygon_area(&clipped), polygon_area(&tri));
        assert_eq!(clipped.len(), 3);
        for p in &tri {
            assert!(clipped.contains(p));
        }
    }

    #[test]
    fn big_square_clips_to_screen() {
        let sq = convex_hull(&[[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]]);
        assert_eq!(polygon_area(&sq), 16.0);
        assert!((polygon_area(&clip_convex(&sq, &Rect::SCREEN)) - 4.0).abs() < 1e-15);
    }

    fn point_in_convex(poly: &[Point2], p: Point2) -> bool {
        (0..poly.len()).all(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
        })
    }

    #[test]
    fn hull_area_matches_rejection_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point2> = (0..50)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let hull = convex_hull(&pts);
        let samples = 1_000_000;
        let hits = (0..samples)
            .filter(|_| point_in_convex(&hull, [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
            .count();
        let estimate = 4.0 * hits as f64 / samples as f64;
        let area = polygon_area(&hull);
        assert!(((area - estimate) / area).abs() < 1e-2, "{area} vs {estimate}");
    }
}
