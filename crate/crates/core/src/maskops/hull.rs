use super::{BinaryMask, MaskError};

/// Convex polygon over pixel centers, vertices in counter-clockwise order
/// (positive shoelace area in `(x, y)` coordinates), with no collinear triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvexHull {
    vertices: Vec<(i64, i64)>,
}

#[inline]
fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

impl ConvexHull {
    /// Andrew's monotone chain. Degenerate inputs yield 1 or 2 vertices.
    pub fn from_points(points: &[(i64, i64)]) -> Result<Self, MaskError> {
        if points.is_empty() {
            return Err(MaskError::EmptyMask);
        }
        let mut pts = points.to_vec();
        pts.sort_unstable();
        pts.dedup();
        if pts.len() < 3 {
            return Ok(Self { vertices: pts });
        }
        let mut lower: Vec<(i64, i64)> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<(i64, i64)> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Ok(Self { vertices: lower })
    }

    pub fn vertices(&self) -> &[(i64, i64)] {
        &self.vertices
    }

    /// Shoelace area in square pixels.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let twice: i64 = (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum();
        twice as f64 / 2.0
    }

    /// Closed-set containment test (boundary counts as inside).
    pub fn contains(&self, p: (f64, f64)) -> bool {
        let v = &self.vertices;
        match v.len() {
            0 => false,
            1 => (p.0 - v[0].0 as f64).abs() < 1e-9 && (p.1 - v[0].1 as f64).abs() < 1e-9,
            2 => {
                let (a, b) = (v[0], v[1]);
                let (ax, ay, bx, by) = (a.0 as f64, a.1 as f64, b.0 as f64, b.1 as f64);
                let c = (bx - ax) * (p.1 - ay) - (by - ay) * (p.0 - ax);
                let dot = (p.0 - ax) * (bx - ax) + (p.1 - ay) * (by - ay);
                let len2 = (bx - ax).powi(2) + (by - ay).powi(2);
                c.abs() < 1e-9 * len2.sqrt().max(1.0) && dot >= -1e-9 && dot <= len2 + 1e-9
            }
            n => (0..n).all(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                let c = (b.0 - a.0) as f64 * (p.1 - a.1 as f64) - (b.1 - a.1) as f64 * (p.0 - a.0 as f64);
                c >= -1e-9
            }),
        }
    }
}

/// Convex hull of the foreground pixel centers. Only the leftmost and rightmost
/// pixel of each row can be a hull vertex, so those are the only candidates.
pub fn convex_hull(mask: &BinaryMask) -> Result<ConvexHull, MaskError> {
    let mut candidates = Vec::new();
    for y in 0..mask.height() {
        let mut first = None;
        let mut last = None;
        for x in 0..mask.width() {
            if mask.get(x, y) {
                first.get_or_insert(x);
                last = Some(x);
            }
        }
        if let (Some(a), Some(b)) = (first, last) {
            candidates.push((a as i64, y as i64));
            candidates.push((b as i64, y as i64));
        }
    }
    ConvexHull::from_points(&candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_pixels_make_a_triangle() {
        let m = BinaryMask::from_fn(10, 10, |x, y| [(1, 1), (8, 2), (4, 7)].contains(&(x, y))).unwrap();
        let h = convex_hull(&m).unwrap();
        let mut v = h.vertices().to_vec();
        v.sort();
        assert_eq!(v, vec![(1, 1), (4, 7), (8, 2)]);
        assert!(h.area() > 0.0);
    }

    #[test]
    fn disk_area_matches_analytic() {
        let r = 30.0f64;
        let m = BinaryMask::from_fn(80, 80, |x, y| {
            let (dx, dy) = (x as f64 - 40.0, y as f64 - 40.0);
            dx * dx + dy * dy <= r * r
        })
        .unwrap();
        let area = convex_hull(&m).unwrap().area();
        // lattice hull of the pixel centers, from an independent quickhull
        assert_eq!(area, 2792.0);
        // centers sit inside the continuous disk, so the hull falls short of pi r^2
        let want = std::f64::consts::PI * r * r;
        assert!(area < want && (want - area) / want < 0.013, "area {area} vs {want}");
    }

    #[test]
    fn collinear_points_are_dropped() {
        let m = BinaryMask::from_fn(10, 3, |_, y| y == 1).unwrap();
        let h = convex_hull(&m).unwrap();
        assert_eq!(h.vertices(), &[(0, 1), (9, 1)]);
        let sq = BinaryMask::from_fn(5, 5, |_, _| true).unwrap();
        assert_eq!(convex_hull(&sq).unwrap().vertices().len(), 4);
    }

    #[test]
    fn empty_mask_errors() {
        let m = BinaryMask::new(4, 4).unwrap();
        assert!(matches!(convex_hull(&m), Err(MaskError::EmptyMask)));
    }

    #[test]
    fn hull_of_hull_is_hull() {
        let m = BinaryMask::from_fn(30, 20, |x, y| (x * 7 + y * 3) % 11 == 0 && x > 2).unwrap();
        let h = convex_hull(&m).unwrap();
        assert_eq!(ConvexHull::from_points(h.vertices()).unwrap(), h);
        for (x, y) in m.foreground() {
            assert!(h.contains((x as f64, y as f64)));
        }
    }
}
