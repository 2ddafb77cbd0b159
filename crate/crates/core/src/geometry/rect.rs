use serde::{Deserialize, Serialize};

use super::{convex_hull, GeometryError, Point2, Polygon};

/// Rectangle at an arbitrary orientation.
///
/// Canonical form: `angle_deg` in `[0, 90)` is the direction of the `width`
/// edge measured from the grid x-axis, and `height` is the extent along the
/// perpendicular. Any rectangle has exactly one such representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedRect {
    pub center: Point2,
    pub width: f64,
    pub height: f64,
    pub angle_deg: f64,
}

impl RotatedRect {
    /// Canonicalizes an arbitrary `(width, height, angle)` triple.
    pub fn new(center: Point2, width: f64, height: f64, angle_deg: f64) -> Self {
        let mut angle = angle_deg.rem_euclid(180.0);
        let (mut w, mut h) = (width.abs(), height.abs());
        if angle >= 90.0 {
            angle -= 90.0;
            std::mem::swap(&mut w, &mut h);
        }
        // rem_euclid can round up to exactly the modulus.
        if angle >= 90.0 {
            angle = 0.0;
            std::mem::swap(&mut w, &mut h);
        }
        Self { center, width: w, height: h, angle_deg: angle }
    }

    pub fn axis_aligned(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(Point2::new(0.5 * (x0 + x1), 0.5 * (y0 + y1)), x1 - x0, y1 - y0, 0.0)
    }

    /// Unit vectors along the width and height edges.
    pub fn axes(&self) -> (Point2, Point2) {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        (Point2::new(c, s), Point2::new(-s, c))
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn long_side(&self) -> f64 {
        self.width.max(self.height)
    }

    pub fn short_side(&self) -> f64 {
        self.width.min(self.height)
    }

    pub fn aspect_ratio(&self) -> f64 {
        let short = self.short_side();
        if short > 0.0 {
            self.long_side() / short
        } else {
            f64::INFINITY
        }
    }

    /// Unit vector along the longer side.
    pub fn long_axis(&self) -> Point2 {
        let (u, v) = self.axes();
        if self.width >= self.height {
            u
        } else {
            v
        }
    }

    /// Corners in counter-clockwise order (y-up sense), starting at `-u -v`.
    pub fn corners(&self) -> [Point2; 4] {
        let (u, v) = self.axes();
        let (hw, hh) = (0.5 * self.width, 0.5 * self.height);
        let at = |a: f64, b: f64| {
            Point2::new(self.center.x + a * u.x + b * v.x, self.center.y + a * u.y + b * v.y)
        };
        [at(-hw, -hh), at(hw, -hh), at(hw, hh), at(-hw, hh)]
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(self.corners().to_vec()).expect("rectangle with positive sides")
    }

    /// Coordinates of `p` along `(u, v)` relative to the center.
    pub fn local(&self, p: Point2) -> (f64, f64) {
        let (u, v) = self.axes();
        let d = p.sub(self.center);
        (d.dot(u), d.dot(v))
    }

    pub fn contains(&self, p: Point2, slack: f64) -> bool {
        let (a, b) = self.local(p);
        a.abs() <= 0.5 * self.width + slack && b.abs() <= 0.5 * self.height + slack
    }

    /// Recovers a rectangle from four corners in cyclic order, if they form one
    /// within `tol` pixels.
    pub fn from_corners(corners: &[Point2; 4], tol: f64) -> Option<Self> {
        let [c0, c1, c2, c3] = *corners;
        let e0 = c1.sub(c0);
        let e1 = c2.sub(c1);
        let w = e0.dot(e0).sqrt();
        let h = e1.dot(e1).sqrt();
        if w <= tol || h <= tol {
            return None;
        }
        let predicted_c2 = Point2::new(c0.x + e0.x + e1.x, c0.y + e0.y + e1.y);
        let predicted_c3 = Point2::new(c0.x + e1.x, c0.y + e1.y);
        // Deviation from a right angle, expressed as a displacement in pixels.
        let skew = (e0.dot(e1) / w).abs();
        if predicted_c2.dist(c2) > tol || predicted_c3.dist(c3) > tol || skew > tol {
            return None;
        }
        let center = Point2::new(0.25 * (c0.x + c1.x + c2.x + c3.x), 0.25 * (c0.y + c1.y + c2.y + c3.y));
        Some(Self::new(center, w, h, e0.y.atan2(e0.x).to_degrees()))
    }
}

/// Minimum-area enclosing rectangle via rotating calipers over the hull edges.
pub fn min_area_rect(points: &[Point2]) -> Result<RotatedRect, GeometryError> {
    let hull = convex_hull(points)?;
    let vs = hull.vertices();
    let n = vs.len();
    let proj = |idx: usize, origin: Point2, dir: Point2| vs[idx % n].sub(origin).dot(dir);

    let mut best: Option<(f64, RotatedRect)> = None;
    let (mut j, mut k, mut l) = (1usize, 1usize, 1usize);
    for i in 0..n {
        let a = vs[i];
        let b = vs[(i + 1) % n];
        let len = a.dist(b);
        let u = Point2::new((b.x - a.x) / len, (b.y - a.y) / len);
        let nrm = Point2::new(-u.y, u.x);
        let neg_u = Point2::new(-u.x, -u.y);

        if i == 0 {
            j = 1;
        }
        let mut steps = 0;
        while steps < n && proj(j + 1, a, u) >= proj(j, a, u) {
            j += 1;
            steps += 1;
        }
        if i == 0 {
            k = j;
        }
        steps = 0;
        while steps < n && proj(k + 1, a, nrm) >= proj(k, a, nrm) {
            k += 1;
            steps += 1;
        }
        if i == 0 {
            l = k;
        }
        steps = 0;
        while steps < n && proj(l + 1, a, neg_u) >= proj(l, a, neg_u) {
            l += 1;
            steps += 1;
        }

        let max_u = proj(j, a, u);
        let min_u = -proj(l, a, neg_u);
        let max_n = proj(k, a, nrm);
        let width = max_u - min_u;
        let area = width * max_n;
        if best.as_ref().is_none_or(|(best_area, _)| area < *best_area) {
            let mid_u = 0.5 * (max_u + min_u);
            let mid_n = 0.5 * max_n;
            let center = Point2::new(a.x + u.x * mid_u + nrm.x * mid_n, a.y + u.y * mid_u + nrm.y * mid_n);
            let rect = RotatedRect::new(center, width, max_n, u.y.atan2(u.x).to_degrees());
            best = Some((area, rect));
        }
    }
    Ok(best.expect("hull has at least three edges").1)
}
