//! Outer contours of 8-connected components.
//!
//! Components are labelled by flood fill, then each outer boundary is traced
//! along pixel edges (crack following) keeping the component on the right-hand
//! side. The resulting polygon runs through pixel corners, so filling it with
//! pixel-center sampling reproduces the component with its holes filled.

use super::{BinaryMask, Point2, Polygon};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    East,
    South,
    West,
    North,
}

impl Dir {
    fn step(self) -> (i64, i64) {
        match self {
            Dir::East => (1, 0),
            Dir::South => (0, 1),
            Dir::West => (-1, 0),
            Dir::North => (0, -1),
        }
    }

    fn right(self) -> Dir {
        match self {
            Dir::East => Dir::South,
            Dir::South => Dir::West,
            Dir::West => Dir::North,
            Dir::North => Dir::East,
        }
    }

    fn left(self) -> Dir {
        match self {
            Dir::East => Dir::North,
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
        }
    }

    /// Offsets (relative to the vertex) of the front-left and front-right pixels.
    fn ahead(self) -> ((i64, i64), (i64, i64)) {
        match self {
            Dir::East => ((0, -1), (0, 0)),
            Dir::South => ((0, 0), (-1, 0)),
            Dir::West => ((-1, 0), (-1, -1)),
            Dir::North => ((-1, -1), (0, -1)),
        }
    }
}

/// One outer contour per 8-connected component of set pixels, in raster order
/// of each component's first pixel. Holes are ignored.
pub fn extract_contours(mask: &BinaryMask) -> Vec<Polygon> {
    let Some((c0, r0, c1, r1)) = mask.occupied_bounds() else {
        return Vec::new();
    };
    let (bw, bh) = (c1 - c0, r1 - r0);
    let mut labels = vec![0u32; bw * bh];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut contours = Vec::new();
    let mut next_label = 0u32;

    for r in 0..bh {
        for c in 0..bw {
            if labels[r * bw + c] != 0 || !mask.get(c0 + c, r0 + r) {
                continue;
            }
            next_label += 1;
            let label = next_label;
            labels[r * bw + c] = label;
            stack.push((c, r));
            while let Some((x, y)) = stack.pop() {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= bw as i64 || ny >= bh as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        let idx = ny * bw + nx;
                        if labels[idx] == 0 && mask.get(c0 + nx, r0 + ny) {
                            labels[idx] = label;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            let inside = |x: i64, y: i64| {
                x >= 0 && y >= 0 && x < bw as i64 && y < bh as i64 && labels[y as usize * bw + x as usize] == label
            };
            let outline = trace_outline(c as i64, r as i64, inside);
            let vertices = outline
                .into_iter()
                .map(|(x, y)| Point2::new((x + c0 as i64) as f64, (y + r0 as i64) as f64))
                .collect();
            contours.push(Polygon::new(vertices).expect("outline has at least four corners"));
        }
    }
    contours
}

/// Corner vertices of the outer boundary starting at the top-left corner of
/// `(start_x, start_y)`, which must be the component's first pixel in raster order.
fn trace_outline(start_x: i64, start_y: i64, inside: impl Fn(i64, i64) -> bool) -> Vec<(i64, i64)> {
    let start = (start_x, start_y);
    let mut v = start;
    let mut dir = Dir::East;
    let mut corners = vec![start];
    loop {
        let ((flx, fly), (frx, fry)) = dir.ahead();
        let next = if inside(v.0 + flx, v.1 + fly) {
            dir.left()
        } else if inside(v.0 + frx, v.1 + fry) {
            dir
        } else {
            dir.right()
        };
        if next != dir && v != start {
            corners.push(v);
        }
        dir = next;
        let (dx, dy) = dir.step();
        v = (v.0 + dx, v.1 + dy);
        if v == start {
            break;
        }
    }
    corners
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rasterize_polygon;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from(width: usize, height: usize, cells: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        for &(c, r) in cells {
            m.set(c, r, true);
        }
        m
    }

    fn block(x0: usize, y0: usize, w: usize, h: usize) -> Vec<(usize, usize)> {
        (y0..y0 + h).flat_map(|r| (x0..x0 + w).map(move |c| (c, r))).collect()
    }

    #[test]
    fn empty_mask() {
        assert!(extract_contours(&BinaryMask::new(8, 8)).is_empty());
    }

    #[test]
    fn single_pixel() {
        let cs = extract_contours(&mask_from(4, 4, &[(1, 2)]));
        assert_eq!(cs.len(), 1);
        assert_eq!(
            cs[0].vertices(),
            &[Point2::new(1.0, 2.0), Point2::new(2.0, 2.0), Point2::new(2.0, 3.0), Point2::new(1.0, 3.0)]
        );
    }

    #[test]
    fn solid_block_encloses_exactly_its_pixels() {
        let cells = block(3, 4, 5, 5);
        let mask = mask_from(12, 12, &cells);
        let cs = extract_contours(&mask);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 4);
        assert_eq!(cs[0].area(), 25.0);
        assert_eq!(rasterize_polygon(&cs[0], 12, 12), mask);
    }

    #[test]
    fn diagonal_neighbours_are_one_component() {
        let mask = mask_from(6, 6, &[(1, 1), (2, 2), (3, 3), (3, 1)]);
        let cs = extract_contours(&mask);
        assert_eq!(cs.len(), 1);
        assert_eq!(rasterize_polygon(&cs[0], 6, 6), mask);
    }

    #[test]
    fn hole_is_filled() {
        let mut cells = block(0, 0, 5, 5);
        cells.retain(|&c| c != (2, 2));
        let cs = extract_contours(&mask_from(5, 5, &cells));
        assert_eq!(cs.len(), 1);
        assert_eq!(rasterize_polygon(&cs[0], 5, 5).count_ones(), 25);
    }

    #[test]
    fn two_disjoint_blobs() {
        let mut cells = block(2, 2, 6, 3);
        cells.extend(block(2, 5, 2, 4));
        cells.extend(block(12, 6, 4, 4));
        let mask = mask_from(20, 12, &cells);
        let cs = extract_contours(&mask);
        assert_eq!(cs.len(), 2);
        let a = rasterize_polygon(&cs[0], 20, 12);
        let b = rasterize_polygon(&cs[1], 20, 12);
        assert_eq!(a.count_ones(), 26);
        assert_eq!(b.count_ones(), 16);
        assert!(a.bits().iter().zip(b.bits()).all(|(x, y)| !(x & y)));
    }

    #[test]
    fn random_blobs_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            // Unions of random rectangles on either side of a gap; may contain holes.
            let mut a = Vec::new();
            let mut b = Vec::new();
            for _ in 0..4 {
                a.extend(block(rng.random_range(2..10), rng.random_range(2..20), rng.random_range(1..8), rng.random_range(1..8)));
                b.extend(block(rng.random_range(22..30), rng.random_range(2..20), rng.random_range(1..8), rng.random_range(1..8)));
            }
            let mut all = a.clone();
            all.extend(&b);
            let mask = mask_from(40, 30, &all);
            let cs = extract_contours(&mask);
            let comps = cs.len();
            assert!(comps >= 2);
            let mut filled = BinaryMask::new(40, 30);
            for poly in &cs {
                let m = rasterize_polygon(poly, 40, 30);
                for (i, bit) in m.bits().iter().enumerate() {
                    if *bit {
                        filled.set(i % 40, i / 40, true);
                    }
                }
                // Every vertex is a corner of some set pixel.
                for v in poly.vertices() {
                    let (x, y) = (v.x as i64, v.y as i64);
                    let touches = [(x, y), (x - 1, y), (x, y - 1), (x - 1, y - 1)].iter().any(|&(px, py)| {
                        px >= 0 && py >= 0 && px < 40 && py < 30 && mask.get(px as usize, py as usize)
                    });
                    assert!(touches);
                }
            }
            // Filling recovers every set pixel and adds only enclosed holes, i.e. background
            // not 4-reachable from the border.
            let mut outside = vec![false; 40 * 30];
            let mut stack: Vec<(usize, usize)> = Vec::new();
            for r in 0..30 {
                for c in 0..40 {
                    if (r == 0 || c == 0 || r == 29 || c == 39) && !mask.get(c, r) {
                        outside[r * 40 + c] = true;
                        stack.push((c, r));
                    }
                }
            }
            while let Some((c, r)) = stack.pop() {
                let nbrs = [(c.wrapping_sub(1), r), (c + 1, r), (c, r.wrapping_sub(1)), (c, r + 1)];
                for (nc, nr) in nbrs {
                    if nc < 40 && nr < 30 && !mask.get(nc, nr) && !outside[nr * 40 + nc] {
                        outside[nr * 40 + nc] = true;
                        stack.push((nc, nr));
                    }
                }
            }
            for r in 0..30 {
                for c in 0..40 {
                    assert_eq!(filled.get(c, r), !outside[r * 40 + c], "pixel ({c},{r})");
                }
            }
        }
    }
}
