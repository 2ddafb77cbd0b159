use super::{cross, GeometryError, Point2, Polygon, EPSILON};

/// Counter-clockwise (y-up sense) convex hull with collinear points removed.
///
/// Andrew's monotone chain.
pub fn convex_hull(points: &[Point2]) -> Result<Polygon, GeometryError> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeometryError::TooFewPoints { needed: 3, got: pts.len() });
    }
    let scale = pts
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(1.0_f64, f64::max);
    let tol = EPSILON * scale * scale;

    let mut hull = half_hull(pts.iter(), tol);
    let upper = half_hull(pts.iter().rev(), tol);
    hull.pop();
    hull.extend_from_slice(&upper[..upper.len() - 1]);
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateConfiguration("collinear points"));
    }
    Polygon::new(hull)
}

fn half_hull<'a>(points: impl Iterator<Item = &'a Point2>, tol: f64) -> Vec<Point2> {
    let mut chain: Vec<Point2> = Vec::new();
    for &p in points {
        while chain.len() >= 2 && cross(chain[chain.len() - 2], chain[chain.len() - 1], p) <= tol {
            chain.pop();
        }
        chain.push(p);
    }
    chain
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn square_with_center() {
        let h = convex_hull(&[p(0.0, 0.0), p(2.0, 0.0), p(1.0, 1.0), p(2.0, 2.0), p(0.0, 2.0)]).unwrap();
        assert_eq!(h.vertices(), &[p(0.0, 0.0), p(2.0, 0.0), p(2.0, 2.0), p(0.0, 2.0)]);
        assert!(h.signed_area() > 0.0);
    }

    #[test]
    fn triangle_is_reordered_ccw() {
        let h = convex_hull(&[p(0.0, 0.0), p(0.0, 3.0), p(4.0, 0.0)]).unwrap();
        assert_eq!(h.len(), 3);
        assert!(h.signed_area() > 0.0);
    }

    #[test]
    fn collinear_edge_points_dropped() {
        let h = convex_hull(&[p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0), p(2.0, 2.0), p(0.0, 2.0)]).unwrap();
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            convex_hull(&[p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0), p(3.0, 3.0)]),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        assert!(matches!(convex_hull(&[p(0.0, 0.0), p(0.0, 0.0)]), Err(GeometryError::TooFewPoints { .. })));
    }

    #[test]
    fn random_points_contained_and_maximal() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<_> = (0..200).map(|_| p(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))).collect();
        let hull = convex_hull(&pts).unwrap();
        let vs = hull.vertices();
        for q in &pts {
            for i in 0..vs.len() {
                assert!(cross(vs[i], vs[(i + 1) % vs.len()], *q) >= -1e-9, "point outside hull");
            }
        }
        for i in 0..vs.len() {
            let (a, b, c) = (vs[i], vs[(i + 1) % vs.len()], vs[(i + 2) % vs.len()]);
            assert!(cross(a, b, c) > 0.0, "collinear or reflex triple on hull");
        }
        let hull_area = hull.area();
        for i in (0..pts.len()).step_by(7) {
            for j in (i + 1..pts.len()).step_by(5) {
                for k in (j + 1..pts.len()).step_by(3) {
                    let tri = 0.5 * cross(pts[i], pts[j], pts[k]).abs();
                    assert!(hull_area + 1e-9 >= tri);
                }
            }
        }
    }
}
