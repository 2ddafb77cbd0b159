use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{cross, GeometryError, Point2, Polygon, EPSILON};

/// Plane-to-plane projective transform, `x' ~ H x`.
///
/// Stored normalized: `H[2][2] == 1` when that entry is non-zero, otherwise
/// unit Frobenius norm with the first non-zero entry positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Normalizes `m` and rejects singular or non-finite matrices.
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let frob = m.norm();
        if frob <= EPSILON {
            return Err(GeometryError::DegenerateConfiguration("zero matrix"));
        }
        let unit = m / frob;
        let sv = unit.singular_values();
        if sv.min() <= 1e-12 * sv.max() {
            return Err(GeometryError::DegenerateConfiguration("singular homography"));
        }
        let m = if unit[(2, 2)].abs() > EPSILON {
            m / m[(2, 2)]
        } else {
            let lead = unit.transpose().iter().copied().find(|v| v.abs() > EPSILON).unwrap_or(1.0);
            unit * lead.signum()
        };
        Ok(Self { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let mut rows = [[0.0; 3]; 3];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.m[(r, c)];
            }
        }
        rows
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .m
            .try_inverse()
            .ok_or(GeometryError::DegenerateConfiguration("singular homography"))?;
        Self::new(inv)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Self, GeometryError> {
        Self::new(self.m * first.m)
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, GeometryError> {
        project_point(self, p)
    }
}

impl TryFrom<[[f64; 3]; 3]> for Homography {
    type Error = GeometryError;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        Homography::from_rows(rows)
    }
}

impl From<Homography> for [[f64; 3]; 3] {
    fn from(h: Homography) -> Self {
        h.to_rows()
    }
}

/// Maps `p` through `h` with homogeneous normalization.
pub fn project_point(h: &Homography, p: Point2) -> Result<Point2, GeometryError> {
    let v = h.m * Vector3::new(p.x, p.y, 1.0);
    if v.z.abs() <= EPSILON {
        return Err(GeometryError::PointAtInfinity(v.z));
    }
    let out = Point2::new(v.x / v.z, v.y / v.z);
    if !out.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    Ok(out)
}

pub fn project_polygon(h: &Homography, poly: &Polygon) -> Result<Polygon, GeometryError> {
    let vs = poly
        .vertices()
        .iter()
        .map(|&p| project_point(h, p))
        .collect::<Result<Vec<_>, _>>()?;
    Polygon::new(vs)
}

/// Translate to the centroid and scale to RMS distance sqrt(2).
fn normalizing_transform(points: &[Point2]) -> Result<(Matrix3<f64>, Vec<Point2>), GeometryError> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let ms = points.iter().map(|p| (p.x - cx).powi(2) + (p.y - cy).powi(2)).sum::<f64>() / n;
    let rms = ms.sqrt();
    if rms <= EPSILON * (1.0 + cx.abs().max(cy.abs())) {
        return Err(GeometryError::DegenerateConfiguration("coincident points"));
    }
    let s = std::f64::consts::SQRT_2 / rms;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let normalized = points.iter().map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy))).collect();
    Ok((t, normalized))
}

fn check_configuration(points: &[Point2]) -> Result<(), GeometryError> {
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[i].dist(points[j]) <= EPSILON {
                return Err(GeometryError::DegenerateConfiguration("duplicated points"));
            }
        }
    }
    // With exactly four points every triple must be in general position; with
    // more, degeneracy shows up as a rank drop in the design matrix.
    if points.len() == 4 {
        for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
            if cross(points[a], points[b], points[c]).abs() <= EPSILON {
                return Err(GeometryError::DegenerateConfiguration("collinear points"));
            }
        }
    }
    Ok(())
}

/// Normalized direct linear transform over all correspondences `(source, target)`.
pub fn estimate_homography(pairs: &[(Point2, Point2)]) -> Result<Homography, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::TooFewPoints { needed: 4, got: pairs.len() });
    }
    if pairs.iter().any(|(s, t)| !s.is_finite() || !t.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let src: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    let (t_src, src_n) = normalizing_transform(&src)?;
    let (t_dst, dst_n) = normalizing_transform(&dst)?;
    check_configuration(&src_n)?;
    check_configuration(&dst_n)?;

    let n = pairs.len();
    // Pad to a square system so the SVD always exposes the full right null space.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src_n.iter().zip(&dst_n).enumerate() {
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration("svd did not converge"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smallest = order[0];
    let second = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[order.len() - 1]];
    if second <= EPSILON * largest {
        return Err(GeometryError::DegenerateConfiguration("rank-deficient correspondences"));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::from_fn(|r, c| h[3 * r + c]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(GeometryError::DegenerateConfiguration("normalization not invertible"))?;
    Homography::new(t_dst_inv * hn * t_src)
}

/// Euclidean reprojection error of each correspondence, in target pixels.
pub fn reprojection_errors(h: &Homography, pairs: &[(Point2, Point2)]) -> Result<Vec<f64>, GeometryError> {
    pairs
        .iter()
        .map(|(s, t)| project_point(h, *s).map(|p| p.dist(*t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn unit_square() -> [Point2; 4] {
        [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]
    }

    /// Projective map that stays well-conditioned over [0, 1000]^2.
    pub(crate) fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
        let th: f64 = rng.random_range(-3.1..3.1);
        let s: f64 = rng.random_range(0.3..3.0);
        let rows = [
            [s * th.cos() + rng.random_range(-0.2..0.2), -s * th.sin(), rng.random_range(-500.0..500.0)],
            [s * th.sin(), s * th.cos() + rng.random_range(-0.2..0.2), rng.random_range(-500.0..500.0)],
            [rng.random_range(-2e-4..2e-4), rng.random_range(-2e-4..2e-4), 1.0],
        ];
        Homography::from_rows(rows).unwrap()
    }

    /// Direct evaluation of `H * (x, y, 1)` without nalgebra.
    fn oracle_project(rows: [[f64; 3]; 3], q: Point2) -> Point2 {
        let x = rows[0][0] * q.x + rows[0][1] * q.y + rows[0][2];
        let y = rows[1][0] * q.x + rows[1][1] * q.y + rows[1][2];
        let w = rows[2][0] * q.x + rows[2][1] * q.y + rows[2][2];
        p(x / w, y / w)
    }

    #[test]
    fn identity_correspondences_give_identity() {
        let pairs: Vec<_> = unit_square().iter().map(|&q| (q, q)).collect();
        let h = estimate_homography(&pairs).unwrap();
        assert_abs_diff_eq!(*h.matrix(), Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn pure_scaling_is_recovered() {
        let pairs: Vec<_> = unit_square().iter().map(|&q| (q, p(2.0 * q.x, 2.0 * q.y))).collect();
        let h = estimate_homography(&pairs).unwrap();
        let expected = Matrix3::new(2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(*h.matrix(), expected, epsilon = 1e-12);
    }

    #[test]
    fn twenty_points_from_random_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let truth = random_homography(&mut rng);
            let pairs: Vec<_> = (0..20)
                .map(|_| {
                    let s = p(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
                    (s, project_point(&truth, s).unwrap())
                })
                .collect();
            let h = estimate_homography(&pairs).unwrap();
            let worst = reprojection_errors(&h, &pairs).unwrap().into_iter().fold(0.0, f64::max);
            assert!(worst < 1e-6, "max error {worst}");
        }
    }

    #[test]
    fn four_points_map_exactly() {
        let src = [p(10.0, 20.0), p(900.0, 40.0), p(850.0, 700.0), p(30.0, 650.0)];
        let dst = [p(400.0, 400.0), p(1200.0, 410.0), p(1180.0, 1190.0), p(390.0, 1150.0)];
        let pairs: Vec<_> = src.into_iter().zip(dst).collect();
        let h = estimate_homography(&pairs).unwrap();
        for e in reprojection_errors(&h, &pairs).unwrap() {
            assert!(e < 1e-6);
        }
    }

    #[test]
    fn too_few_points() {
        let pairs: Vec<_> = unit_square()[..3].iter().map(|&q| (q, q)).collect();
        assert_eq!(
            estimate_homography(&pairs),
            Err(GeometryError::TooFewPoints { needed: 4, got: 3 })
        );
    }

    #[test]
    fn collinear_and_duplicate_points_rejected() {
        let line: Vec<_> = (0..4).map(|i| (p(i as f64, 0.0), p(0.0, i as f64))).collect();
        assert!(matches!(estimate_homography(&line), Err(GeometryError::DegenerateConfiguration(_))));

        let three_on_a_line = [p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0), p(0.0, 1.0)];
        let pairs: Vec<_> = three_on_a_line.iter().map(|&q| (q, q)).collect();
        assert!(matches!(estimate_homography(&pairs), Err(GeometryError::DegenerateConfiguration(_))));

        let dup = [p(0.0, 0.0), p(0.0, 0.0), p(1.0, 1.0), p(0.0, 1.0), p(1.0, 0.0)];
        let pairs: Vec<_> = dup.iter().map(|&q| (q, q)).collect();
        assert!(matches!(estimate_homography(&pairs), Err(GeometryError::DegenerateConfiguration(_))));
    }

    #[test]
    fn project_point_examples() {
        assert_eq!(project_point(&Homography::identity(), p(5.0, 7.0)).unwrap(), p(5.0, 7.0));
        let scale = Homography::from_rows([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(project_point(&scale, p(3.0, 4.0)).unwrap(), p(6.0, 8.0));
    }

    #[test]
    fn project_point_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let h = random_homography(&mut rng);
            let q = p(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
            let got = project_point(&h, q).unwrap();
            let want = oracle_project(h.to_rows(), q);
            assert!(got.dist(want) < 1e-9 * (1.0 + want.x.abs() + want.y.abs()));
        }
    }

    #[test]
    fn point_at_infinity() {
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(project_point(&h, p(-1.0, 3.0)), Err(GeometryError::PointAtInfinity(_))));
        let square = Polygon::new(vec![p(-1.0, 0.0), p(0.0, 0.0), p(0.0, 1.0)]).unwrap();
        assert!(project_polygon(&h, &square).is_err());
    }

    #[test]
    fn project_polygon_is_vertexwise() {
        let sq = Polygon::new(unit_square().to_vec()).unwrap();
        assert_eq!(project_polygon(&Homography::identity(), &sq).unwrap(), sq);
        let scale = Homography::from_rows([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let out = project_polygon(&scale, &sq).unwrap();
        assert_eq!(out.vertices(), &[p(0.0, 0.0), p(2.0, 0.0), p(2.0, 2.0), p(0.0, 2.0)]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_homography(&mut rng);
        let quad = Polygon::new(vec![p(100.0, 120.0), p(700.0, 90.0), p(640.0, 810.0), p(80.0, 760.0)]).unwrap();
        let out = project_polygon(&h, &quad).unwrap();
        for (a, b) in quad.vertices().iter().zip(out.vertices()) {
            assert!(oracle_project(h.to_rows(), *a).dist(*b) < 1e-9);
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        assert!(Homography::from_rows([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn zero_corner_uses_frobenius_normalization() {
        let h = Homography::from_rows([[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(h.is_err(), "singular");
        let h = Homography::from_rows([[0.0, 0.0, -3.0], [0.0, 3.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(h.matrix().norm(), 1.0, epsilon = 1e-12);
        assert!(h.matrix()[(0, 2)] > 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn scale_invariance(seed in any::<u64>(), k in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64]) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = random_homography(&mut rng);
                let scaled = Homography::new(h.matrix() * k).unwrap();
                let q = p(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
                let a = project_point(&h, q).unwrap();
                let b = project_point(&scaled, q).unwrap();
                prop_assert!(a.dist(b) < 1e-9 * (1.0 + a.x.abs() + a.y.abs()));
            }

            #[test]
            fn inverse_round_trip(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = random_homography(&mut rng);
                let inv = h.inverse().unwrap();
                let q = p(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
                let back = project_point(&inv, project_point(&h, q).unwrap()).unwrap();
                prop_assert!(back.dist(q) < 1e-6);
            }
        }
    }
}
