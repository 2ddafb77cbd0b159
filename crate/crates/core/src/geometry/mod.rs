//! Planar geometry on the bird's-eye grid.
//!
//! Coordinates are pixels with `x` growing right and `y` growing down. Pixel
//! `(col, row)` covers `[col, col + 1) x [row, row + 1)` and is sampled at its
//! center `(col + 0.5, row + 0.5)`.

mod contour;
mod homography;
mod hull;
mod raster;
mod rect;

pub use contour::extract_contours;
pub use homography::{estimate_homography, project_point, project_polygon, reprojection_errors, Homography};
pub use hull::convex_hull;
pub use raster::{fill_spans, point_in_polygon, rasterize_polygon, Window};
pub use rect::{min_area_rect, RotatedRect};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for degeneracy and point-at-infinity checks.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("point maps to infinity (|w| = {0:e})")]
    PointAtInfinity(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A point on the image or grid plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub(crate) fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub(crate) fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// z-component of `(b - a) x (c - a)`; positive when `a, b, c` turn counter-clockwise
/// in a y-up frame.
pub(crate) fn cross(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// A simple (or weakly simple) polygon with at least three vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Builds a polygon, dropping consecutive duplicate vertices (including a
    /// closing vertex equal to the first).
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut vs: Vec<Point2> = Vec::with_capacity(vertices.len());
        for p in vertices {
            if vs.last() != Some(&p) {
                vs.push(p);
            }
        }
        while vs.len() > 1 && vs.first() == vs.last() {
            vs.pop();
        }
        if vs.len() < 3 {
            return Err(GeometryError::TooFewPoints { needed: 3, got: vs.len() });
        }
        Ok(Self { vertices: vs })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as `(start, end)` pairs, closing back to the first vertex.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace signed area. Positive for counter-clockwise order in a y-up frame.
    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(&self.vertices, p)
    }
}

impl TryFrom<Vec<Point2>> for Polygon {
    type Error = GeometryError;

    fn try_from(v: Vec<Point2>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

/// Row-major occupancy mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width * height).then_some(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Bounding box of set pixels as `(col0, row0, col1, row1)`, exclusive upper bounds.
    pub fn occupied_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut rows = (0..self.height).filter(|&r| self.row(r).iter().any(|b| *b));
        let row0 = rows.next()?;
        let row1 = rows.last().unwrap_or(row0) + 1;
        let mut col0 = self.width;
        let mut col1 = 0;
        for r in row0..row1 {
            let row = self.row(r);
            if let Some(c) = row.iter().position(|b| *b) {
                col0 = col0.min(c);
            }
            if let Some(c) = row.iter().rposition(|b| *b) {
                col1 = col1.max(c + 1);
            }
        }
        Some((col0, row0, col1, row1))
    }

    fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.width..(r + 1) * self.width]
    }
}
